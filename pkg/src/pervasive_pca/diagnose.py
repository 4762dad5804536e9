"""Practitioner diagnostics for score plots.

Fits the 2 x 2 map from population to sample score pairs, names the kind of
distortion it produces, estimates spike strengths from a scree sequence and
answers how many observations keep the pairwise noise below a target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import polar

from .limit import noise_variance_asymptotic


def align_signs(sample, reference) -> tuple[np.ndarray, np.ndarray]:
    """Flip rows of ``sample`` to correlate positively with ``reference``.

    Returns the aligned copy and the applied signs.
    """
    S = np.atleast_2d(np.asarray(sample, dtype=float))
    R = np.atleast_2d(np.asarray(reference, dtype=float))
    if S.shape != R.shape:
        raise ValueError(f"shape mismatch {S.shape} vs {R.shape}")
    signs = np.where(np.einsum("ij,ij->i", S, R) < 0, -1.0, 1.0)
    return S * signs[:, None], signs


@dataclass(frozen=True)
class PairTransform:
    """``sample ~ P @ R @ population`` with ``P`` symmetric PSD and ``R`` orthogonal.

    ``scale_x``/``scale_y`` are the diagonal of ``P``; ``angle`` is the rotation
    part of ``R`` (after removing a reflection across the first axis when
    ``reflection`` is set).
    """

    scale_x: float
    scale_y: float
    angle: float
    residual: float
    reflection: bool
    matrix: np.ndarray = field(repr=False, default=None)

    @property
    def angle_degrees(self) -> float:
        return math.degrees(self.angle)


def fit_pair_transform(sample_pair, population_pair) -> PairTransform:
    """Least-squares 2 x 2 map from population to sample scores, polar-decomposed."""
    S = np.asarray(sample_pair, dtype=float)
    P = np.asarray(population_pair, dtype=float)
    if S.shape != P.shape or S.ndim != 2 or S.shape[0] != 2:
        raise ValueError("expected two 2 x n score arrays of equal shape")
    if S.shape[1] < 3:
        raise ValueError("need n >= 3 observations")
    gram = P @ P.T
    if np.linalg.matrix_rank(P) < 2:
        raise ValueError("population pair is rank-deficient")
    A = np.linalg.solve(gram, P @ S.T).T
    R, H = polar(A, side="left")
    reflection = bool(np.linalg.det(R) < 0)
    rot = R @ np.diag([1.0, -1.0]) if reflection else R
    angle = math.atan2(rot[1, 0], rot[0, 0])
    if angle <= -math.pi:
        angle += 2 * math.pi
    residual = float(np.sqrt(np.mean((S - A @ P) ** 2)))
    return PairTransform(
        scale_x=float(H[0, 0]),
        scale_y=float(H[1, 1]),
        angle=angle,
        residual=residual,
        reflection=reflection,
        matrix=A,
    )


@dataclass(frozen=True)
class Thresholds:
    """Scale tolerance (relative) and angle tolerance (degrees) for classification."""

    scale: float = 0.1
    angle_degrees: float = 10.0


@dataclass(frozen=True)
class TransformClass:
    label: str
    evidence: tuple[str, ...]


LABELS = ("scaling-outward", "scaling-inward", "rotation", "saddle", "fault", "near-identity", "mixed")


def classify_transform(t: PairTransform, thresholds: Thresholds = Thresholds()) -> TransformClass:
    """Name the distortion of a score pair.

    Scales count as "up" above ``1 + scale``, "down" below ``1 - scale``, and
    "flat" otherwise; the angle counts as large above ``angle_degrees``.
    """
    lo, hi = 1 - thresholds.scale, 1 + thresholds.scale

    def state(s):
        return "up" if s > hi else "down" if s < lo else "flat"

    sx, sy = state(t.scale_x), state(t.scale_y)
    turned = abs(t.angle_degrees) > thresholds.angle_degrees
    evidence = [f"scale_x {sx} ({t.scale_x:.4g})", f"scale_y {sy} ({t.scale_y:.4g})"]
    evidence.append(f"angle {'large' if turned else 'small'} ({t.angle_degrees:.4g} deg)")
    if t.reflection:
        evidence.append("reflection")
    states = {sx, sy}
    if not turned:
        if states == {"up"}:
            label = "scaling-outward"
        elif states == {"down"}:
            label = "scaling-inward"
        elif states == {"up", "down"}:
            label = "saddle"
        elif states == {"flat"}:
            label = "near-identity"
        else:
            label = "mixed"
    else:
        if states == {"flat"}:
            label = "rotation"
        elif states == {"up", "down"}:
            label = "fault"
        else:
            label = "mixed"
    return TransformClass(label=label, evidence=tuple(evidence))


# ---------------------------------------------------------------------------
# Signal strengths and sample sizes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalEstimate:
    sigma2_hat: np.ndarray
    m_hat: int
    scree: np.ndarray


def choose_spike_count(eigenvalues: Sequence[float], tol: float = 1e-9) -> int:
    """Position of the largest relative drop ``(d_j - d_{j+1}) / d_j`` in a scree sequence.

    Trailing zeros are ignored; a flat sequence yields 0.
    """
    d = np.asarray(eigenvalues, dtype=float)
    d = d[d > 0]
    if d.size < 2:
        return 0
    gaps = (d[:-1] - d[1:]) / d[:-1]
    if gaps.max() <= tol:
        return 0
    return int(np.argmax(gaps)) + 1


def estimate_signals(eigenvalues: Sequence[float], p: int, m: Union[int, str] = "auto") -> SignalEstimate:
    """Signal strengths ``d_j / p`` of the first ``m`` scree eigenvalues."""
    d = np.asarray(eigenvalues, dtype=float)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("need a non-empty 1-d eigenvalue sequence")
    if np.any(np.diff(d) > 0):
        raise ValueError("eigenvalues must be in non-increasing order")
    if p < d.size:
        raise ValueError(f"p={p} smaller than the number of eigenvalues {d.size}")
    m_hat = choose_spike_count(d) if m == "auto" else int(m)
    if not 0 <= m_hat <= d.size:
        raise ValueError(f"m={m_hat} outside 0..{d.size}")
    return SignalEstimate(sigma2_hat=d[:m_hat] / p, m_hat=m_hat, scree=d)


def _min_n(total: float, target: float) -> int:
    if total == 0:
        return 1
    n = max(1, math.floor(total / target**2) + 1)
    while n > 1 and math.sqrt(total / (n - 1)) < target:
        n -= 1
    while not math.sqrt(total / n) < target:
        n += 1
    return n


def required_sample_size(sigma2: Sequence[float], j: int, k: int, target_sd: float) -> tuple[int, int]:
    """Smallest ``n`` with leading-order noise sd below ``target_sd``, for ``eps_ij`` and ``eps_ik``."""
    if not target_sd > 0:
        raise ValueError("target_sd must be positive")
    nv = noise_variance_asymptotic(sigma2, 1.0, j, k)
    return _min_n(nv.var_j, target_sd), _min_n(nv.var_k, target_sd)


def sample_size_table(sigma2: Sequence[float], target_sd: float, pairs: Optional[Sequence[tuple[int, int]]] = None) -> list[dict]:
    """Rows ``{j, k, component, analytic_sd_n1, required_n}`` for each pair."""
    m = len(sigma2)
    if pairs is None:
        pairs = [(j, k) for j in range(1, m + 1) for k in range(j + 1, m + 1)]
    rows = []
    for j, k in pairs:
        nv = noise_variance_asymptotic(sigma2, 1.0, j, k)
        nj, nk = required_sample_size(sigma2, j, k, target_sd)
        rows.append({"j": j, "k": k, "component": j, "unit_sd": nv.sd_j, "required_n": nj})
        rows.append({"j": j, "k": k, "component": k, "unit_sd": nv.sd_k, "required_n": nk})
    return rows
