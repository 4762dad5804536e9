"""Large-``p`` limits of sample PCA under linearly growing spikes.

With ``m`` spikes ``lambda_j = sigma_j^2 p`` and fixed ``n``, everything is driven
by the ``m x m`` random matrix ``W = Zt^T Zt`` where ``Zt`` has columns
``sigma_j z_j`` (the scaled population scores). As ``p`` grows

- ``d_j / p -> (d_j(W) + tau2) / n`` for spikes and ``tau2 / n`` otherwise,
- the dual eigenvector ``u_j -> Zt v_j(W) / sqrt(d_j(W))``,
- the standardized sample score
  ``zhat_ij -> sqrt(n / d_j(W)) * sum_l sigma_l z_il v_jl(W)``.

Here ``v_jl(W)`` is entry ``l`` of eigenvector ``j`` of ``W``. Component indices
``j, k, l`` in the public API are 1-based. Signal strengths are always passed as
variances ``sigma_j^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SEPARATION_RATIO = 1.05


@dataclass(frozen=True)
class WEigen:
    """Eigensystem of ``W = Zt^T Zt``.

    ``VW[:, j]`` is eigenvector ``j`` (0-based column), signed so that its own
    diagonal entry ``VW[j, j]`` is nonnegative.
    """

    W: np.ndarray
    dW: np.ndarray
    VW: np.ndarray
    Z_tilde: np.ndarray

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.Z_tilde.shape[0]

    def near_degenerate(self, ratio: float = SEPARATION_RATIO) -> list[int]:
        """1-based ``j`` whose eigenvalue is within ``ratio`` of the next one."""
        d = self.dW
        return [j + 1 for j in range(len(d) - 1) if d[j + 1] <= 0 or d[j] / d[j + 1] < ratio]


def _check_sigma2(sigma2) -> np.ndarray:
    s2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
    if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
        raise ValueError("signal strengths must be positive and finite")
    return s2


def build_w(Z_top, sigma2: Sequence[float]) -> WEigen:
    """Form ``W`` from ``n x m`` population scores and spike strengths ``sigma2``."""
    Z_top = np.asarray(Z_top, dtype=float)
    if Z_top.ndim == 1:
        Z_top = Z_top[:, None]
    s2 = _check_sigma2(sigma2)
    if Z_top.shape[1] != s2.size:
        raise ValueError(f"Z_top has {Z_top.shape[1]} columns but {s2.size} signal strengths")
    if s2.size < 1:
        raise ValueError("need at least one spike")
    Zt = Z_top * np.sqrt(s2)
    W = Zt.T @ Zt
    W = (W + W.T) / 2
    vals, vecs = np.linalg.eigh(W)
    order = np.argsort(-vals, kind="stable")
    dW = np.clip(vals[order], 0.0, None)
    VW = vecs[:, order]
    diag = np.diagonal(VW)
    VW = VW * np.where(diag < 0, -1.0, 1.0)
    return WEigen(W=W, dW=dW, VW=VW, Z_tilde=Zt)


def _scaling(we: WEigen) -> np.ndarray:
    if np.any(we.dW <= 0):
        bad = [j + 1 for j in np.flatnonzero(we.dW <= 0)]
        raise ValueError(f"degenerate limit: d_j(W) = 0 for j in {bad}")
    return np.sqrt(we.n / we.dW)


def predict_scores(we: WEigen) -> np.ndarray:
    """Limiting standardized sample scores, an ``m x n`` matrix.

    Row ``j`` is ``sqrt(n / d_j(W)) * Zt @ v_j(W)``.
    """
    return _scaling(we)[:, None] * (we.Z_tilde @ we.VW).T


def predict_sample_eigenvalues(we: WEigen, tau2: float, n: int, count: int) -> np.ndarray:
    """Limits of ``d_j / p``: ``(d_j(W) + tau2) / n`` for spikes, then ``tau2 / n``."""
    out = np.full(count, tau2 / n)
    k = min(count, we.m)
    out[:k] = (we.dW[:k] + tau2) / n
    return out


def predict_dual_eigenvector(we: WEigen, j: int) -> np.ndarray:
    """Unit-norm limit ``Zt v_j(W) / sqrt(d_j(W))`` of the ``j``-th dual eigenvector."""
    if not 1 <= j <= we.m:
        raise IndexError(f"component {j} outside 1..{we.m}")
    d = we.dW[j - 1]
    if d <= 0:
        raise ValueError(f"degenerate limit: d_{j}(W) = 0")
    return we.Z_tilde @ we.VW[:, j - 1] / np.sqrt(d)


@dataclass(frozen=True)
class PairDecomposition:
    """``[zhat_j, zhat_k] = scaling @ rotation @ [sigma_j z_j, sigma_k z_k] + noise``."""

    j: int
    k: int
    scaling: np.ndarray
    rotation: np.ndarray
    noise: np.ndarray

    def recompose(self, Z_tilde: np.ndarray) -> np.ndarray:
        pair = Z_tilde[:, [self.j - 1, self.k - 1]].T
        return self.scaling @ self.rotation @ pair + self.noise


def pair_decomposition(we: WEigen, j: int, k: int) -> PairDecomposition:
    """Split the limiting scores of components ``j`` and ``k`` into scaling,
    approximate rotation and the contamination from the other spikes."""
    if j == k:
        raise ValueError("j and k must differ")
    for c in (j, k):
        if not 1 <= c <= we.m:
            raise IndexError(f"component {c} outside 1..{we.m}")
    sc = _scaling(we)
    a, b = j - 1, k - 1
    scaling = np.diag([sc[a], sc[b]])
    # row r = component, column = coefficient of sigma_j z_j / sigma_k z_k
    rotation = we.VW[np.ix_([a, b], [a, b])].T
    others = [l for l in range(we.m) if l not in (a, b)]
    noise = np.zeros((2, we.n))
    if others:
        Zo = we.Z_tilde[:, others]
        noise[0] = sc[a] * (Zo @ we.VW[others, a])
        noise[1] = sc[b] * (Zo @ we.VW[others, b])
    return PairDecomposition(j=j, k=k, scaling=scaling, rotation=rotation, noise=noise)


@dataclass(frozen=True)
class LimitPrediction:
    """Everything the large-``p`` limit says about one draw of spike scores."""

    weigen: WEigen
    predicted_scores: np.ndarray
    predicted_sample_eigenvalues: np.ndarray
    pairs: dict = field(default_factory=dict)
    near_degenerate: tuple[int, ...] = ()

    @property
    def scaling(self) -> dict:
        return {key: pd.scaling for key, pd in self.pairs.items()}

    @property
    def rotation(self) -> dict:
        return {key: pd.rotation for key, pd in self.pairs.items()}

    @property
    def noise(self) -> dict:
        return {key: pd.noise for key, pd in self.pairs.items()}


def predict(Z_top, sigma2: Sequence[float], tau2: float, count: int | None = None) -> LimitPrediction:
    """Scores, eigenvalues and every pairwise decomposition for one score draw."""
    we = build_w(Z_top, sigma2)
    n = we.n
    count = n if count is None else count
    pairs = {
        (j, k): pair_decomposition(we, j, k)
        for j in range(1, we.m + 1)
        for k in range(j + 1, we.m + 1)
    }
    return LimitPrediction(
        weigen=we,
        predicted_scores=predict_scores(we),
        predicted_sample_eigenvalues=predict_sample_eigenvalues(we, tau2, n, count),
        pairs=pairs,
        near_degenerate=tuple(we.near_degenerate()),
    )


# ---------------------------------------------------------------------------
# Noise variance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseVariance:
    """Leading-order variance of the noise terms of the pair ``(j, k)``.

    ``components_j[l]`` is the summand ``(sigma_j^2 / sigma_l^2 - 1)^-2`` (before
    division by ``n``) contributed by spike ``l``.
    """

    j: int
    k: int
    n: float
    var_j: float
    var_k: float
    components_j: dict
    components_k: dict

    @property
    def sd_j(self) -> float:
        return float(np.sqrt(self.var_j))

    @property
    def sd_k(self) -> float:
        return float(np.sqrt(self.var_k))

    @property
    def analytic_sd(self) -> tuple[float, float]:
        return self.sd_j, self.sd_k


def _pair_terms(s2: np.ndarray, target: int, j: int, k: int) -> dict:
    terms = {}
    for l in range(1, s2.size + 1):
        if l in (j, k):
            continue
        if s2[l - 1] == s2[target - 1]:
            raise ValueError(f"sigma2[{target}] == sigma2[{l}]: noise variance is singular")
        terms[l] = float((s2[target - 1] / s2[l - 1] - 1.0) ** -2)
    return terms


def noise_variance_asymptotic(sigma2: Sequence[float], n: float, j: int, k: int) -> NoiseVariance:
    """``var(eps_ij) = (1/n) * sum_{l != j,k} (sigma_j^2 / sigma_l^2 - 1)^-2``, same for ``k``."""
    s2 = _check_sigma2(sigma2)
    if j == k:
        raise ValueError("j and k must differ")
    for c in (j, k):
        if not 1 <= c <= s2.size:
            raise IndexError(f"component {c} outside 1..{s2.size}")
    if not n > 0:
        raise ValueError("n must be positive")
    tj = _pair_terms(s2, j, j, k)
    tk = _pair_terms(s2, k, j, k)
    return NoiseVariance(
        j=j, k=k, n=n,
        var_j=sum(tj.values()) / n, var_k=sum(tk.values()) / n,
        components_j=tj, components_k=tk,
    )


def wishart_asymptotics(sigma2: Sequence[float], j: int) -> tuple[np.ndarray, float]:
    """Large-``n`` law of the ``j``-th eigenpair of ``W / n`` for normal scores.

    Returns the diagonal covariance of ``sqrt(n) (v_j(W) - e_j)``, with entries
    ``sigma_j^2 sigma_i^2 / (sigma_j^2 - sigma_i^2)^2`` off ``i = j`` and 0 at
    ``i = j``, and the variance ``2 sigma_j^4`` of ``sqrt(n) (d_j(W/n) - sigma_j^2)``.
    """
    s2 = _check_sigma2(sigma2)
    if not 1 <= j <= s2.size:
        raise IndexError(f"component {j} outside 1..{s2.size}")
    sj = s2[j - 1]
    diag = np.zeros(s2.size)
    for i in range(s2.size):
        if i == j - 1:
            continue
        if s2[i] == sj:
            raise ValueError("tied signal strengths: eigenvector law is singular")
        diag[i] = sj * s2[i] / (sj - s2[i]) ** 2
    return np.diag(diag), 2.0 * sj**2


def delta_method_variance(sigma2: Sequence[float], j: int, k: int) -> float:
    """``n * var(eps_ij)`` from first-order propagation of the Wishart eigenvector law.

    With the scores fixed at 1, ``eps_ij = d_j(W/n)^{-1/2} sum_{l != j,k} sigma_l v_jl``.
    At ``(sigma_j^2, e_j)`` the eigenvalue derivative vanishes and the derivative
    in ``v_jl`` is ``sigma_l / sigma_j``.
    """
    s2 = _check_sigma2(sigma2)
    cov_v, _ = wishart_asymptotics(s2, j)
    grad = np.zeros(s2.size)
    for l in range(1, s2.size + 1):
        if l not in (j, k):
            grad[l - 1] = np.sqrt(s2[l - 1] / s2[j - 1])
    return float(grad @ cov_v @ grad)
