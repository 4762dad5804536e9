"""Covariance models with spiked eigenvalues that grow linearly in the dimension.

Three declarative descriptions are supported:

- ``FactorVector``: a single loading vector ``v`` plus isotropic noise, giving
  ``Sigma = v v^T + sigma^2 I``.
- ``BlockSpec``: independent equicorrelated blocks followed by an identity tail.
- ``SpikeSpec``: ``m`` spikes ``lambda_j = sigma_j^2 * p`` on a chosen orthonormal
  basis, with the remaining eigenvalues averaging ``tau2``.

Every model exposes its eigen-representation through an ``OrthonormalBasis`` so
data can be generated scores-first without ever forming the ``p x p`` matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.fft import dct, idct

MATERIALIZE_LIMIT = 5000


def _as_floats(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


def block_size(fraction: float, p: int) -> int:
    """Number of variables in a block: ``fraction * p`` rounded half-up."""
    return int(math.floor(fraction * p + 0.5))


# ---------------------------------------------------------------------------
# Declarative specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorVector:
    """Loading vector ``v`` of a one-factor model ``x = v z + eps``."""

    coefficients: tuple[float, ...]
    noise_sigma2: float = 1.0

    def __post_init__(self):
        coef = _as_floats(self.coefficients)
        object.__setattr__(self, "coefficients", coef)
        if len(coef) < 1:
            raise ValueError("FactorVector needs at least one coefficient")
        if not all(math.isfinite(c) for c in coef):
            raise ValueError("FactorVector coefficients must be finite")
        if all(c == 0.0 for c in coef):
            raise ValueError("FactorVector coefficients must not all be zero")
        if not self.noise_sigma2 > 0:
            raise ValueError("noise_sigma2 must be positive")

    @property
    def p(self) -> int:
        return len(self.coefficients)

    def covariance(self) -> np.ndarray:
        if self.p > MATERIALIZE_LIMIT:
            raise ValueError(f"p={self.p} exceeds materialization limit {MATERIALIZE_LIMIT}")
        v = np.asarray(self.coefficients)
        return np.outer(v, v) + self.noise_sigma2 * np.eye(self.p)


@dataclass(frozen=True)
class BlockSpec:
    """Independent equicorrelated blocks followed by an identity tail.

    Parameters
    ----------
    sigma2 : float
        Common variance of every variable.
    blocks : sequence of (fraction, rho)
        Block ``j`` holds ``round(fraction * p)`` consecutive variables with
        pairwise correlation ``rho``.
    p : int
        Dimension.
    """

    sigma2: float
    blocks: tuple[tuple[float, float], ...]
    p: int

    def __post_init__(self):
        blocks = tuple((float(r), float(rho)) for r, rho in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be a positive integer")
        if not blocks:
            raise ValueError("BlockSpec needs at least one block")
        total = 0.0
        for idx, (r, rho) in enumerate(blocks):
            if not 0 < r <= 1:
                raise ValueError(f"block {idx}: fraction {r} not in (0, 1]")
            if not 0 <= rho < 1:
                raise ValueError(f"block {idx}: correlation {rho} not in [0, 1)")
            total += r
        if total > 1 + 1e-12:
            raise ValueError(f"block fractions sum to {total} > 1")
        sizes = self.sizes
        if min(sizes) < 1:
            raise ValueError(f"block size 0 after rounding (sizes {sizes}, p={self.p})")
        if sum(sizes) > self.p:
            raise ValueError(f"rounded block sizes {sizes} exceed p={self.p}")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(block_size(r, self.p) for r, _ in self.blocks)

    @property
    def m(self) -> int:
        return len(self.blocks)

    def with_p(self, p: int) -> "BlockSpec":
        return replace(self, p=p)


@dataclass(frozen=True)
class SpikeSpec:
    """``m`` spikes ``lambda_j = sigma2[j] * p`` plus a tail averaging ``tau2``.

    ``basis`` picks the spike eigenvectors: ``"blocks"`` uses normalized
    indicators of disjoint runs of ``p // m`` coordinates, ``"random"`` draws a
    seeded random orthonormal frame. ``tail`` is ``"flat"`` (all non-spike
    eigenvalues equal ``tau2``) or ``"decaying"`` (linearly decreasing weights
    with the same average).
    """

    sigma2: tuple[float, ...]
    tau2: float
    p: int
    n: int
    basis: str = "blocks"
    basis_seed: int = 0
    tail: str = "flat"

    def __post_init__(self):
        sig = _as_floats(self.sigma2) if len(np.atleast_1d(self.sigma2)) else ()
        object.__setattr__(self, "sigma2", sig)
        if any(not s > 0 for s in sig):
            raise ValueError("signal strengths must be positive")
        if any(a <= b for a, b in zip(sig, sig[1:])):
            raise ValueError(f"signal strengths must be strictly decreasing, got {sig}")
        if not self.tau2 >= 0:
            raise ValueError("tau2 must be nonnegative")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be a positive integer")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.m > min(self.p, self.n):
            raise ValueError(f"m={self.m} exceeds min(p, n)={min(self.p, self.n)}")
        if self.basis not in ("blocks", "random"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.tail not in ("flat", "decaying"):
            raise ValueError(f"unknown tail {self.tail!r}")

    @property
    def m(self) -> int:
        return len(self.sigma2)

    def with_p(self, p: int) -> "SpikeSpec":
        return replace(self, p=p)

    def with_n(self, n: int) -> "SpikeSpec":
        return replace(self, n=n)

    def tail_eigenvalues(self) -> np.ndarray:
        t = self.p - self.m
        if t == 0:
            return np.zeros(0)
        if self.tail == "flat":
            return np.full(t, float(self.tau2))
        weights = np.ones(1) if t == 1 else 1.5 - np.arange(t) / (t - 1)
        return self.tau2 * self.p / t * weights


# ---------------------------------------------------------------------------
# Factor-vector operations
# ---------------------------------------------------------------------------


def pervasiveness_ratio(v: Union[FactorVector, Sequence[float]], threshold: float = 0.0) -> float:
    """Proportion of coefficients with ``v_i**2 > threshold``.

    The default ``threshold=0`` is an exact-zero test. A positive threshold can
    be used for noisy estimated loadings.
    """
    coef = np.asarray(v.coefficients if isinstance(v, FactorVector) else v, dtype=float)
    if coef.size == 0:
        raise ValueError("empty loading vector")
    return float(np.count_nonzero(coef**2 > threshold)) / coef.size


def spike_eigenvalue(v: FactorVector) -> float:
    """Top eigenvalue of ``v v^T + sigma^2 I``, i.e. ``sum(v**2) + sigma^2``."""
    if not isinstance(v, FactorVector):
        v = FactorVector(v)
    coef = np.asarray(v.coefficients)
    return float(coef @ coef) + v.noise_sigma2


def spike_eigenvalue_bounds(v: FactorVector) -> tuple[float, float]:
    """Linear-in-``p`` sandwich ``c1 p + sigma^2 <= lambda_1 <= c2 p + sigma^2``.

    ``c1`` and ``c2`` are the pervasiveness ratio times the smallest and largest
    squared non-zero coefficient.
    """
    coef = np.asarray(v.coefficients)
    nz = coef[coef != 0] ** 2
    r = pervasiveness_ratio(v)
    return r * nz.min() * v.p + v.noise_sigma2, r * nz.max() * v.p + v.noise_sigma2


# ---------------------------------------------------------------------------
# Block spectra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpectrum:
    """Closed-form eigenvalues of a ``BlockSpec``.

    ``spikes[j]`` is the top eigenvalue of block ``j`` (block order),
    ``within[j]`` the eigenvalue of its ``sizes[j] - 1`` contrasts and
    ``tail_value`` the eigenvalue of the ``tail_count`` identity coordinates.
    """

    spikes: np.ndarray
    within: np.ndarray
    sizes: tuple[int, ...]
    tail_value: float
    tail_count: int

    def full(self) -> np.ndarray:
        """Complete spectrum sorted in descending order."""
        parts = [self.spikes]
        parts += [np.full(k - 1, w) for k, w in zip(self.sizes, self.within)]
        parts.append(np.full(self.tail_count, self.tail_value))
        return np.sort(np.concatenate(parts))[::-1]


def block_eigenvalues(spec: BlockSpec) -> BlockSpectrum:
    """Exact spectrum of the assembled block covariance.

    Uses the integer block size ``k_j`` in ``sigma2 * (rho_j * k_j + 1 - rho_j)``
    so the result matches the finite matrix rather than its large-``p`` limit.
    """
    sizes = spec.sizes
    rho = np.array([b[1] for b in spec.blocks])
    k = np.array(sizes, dtype=float)
    spikes = spec.sigma2 * (rho * k + 1 - rho)
    within = spec.sigma2 * (1 - rho)
    return BlockSpectrum(
        spikes=spikes,
        within=within,
        sizes=sizes,
        tail_value=float(spec.sigma2),
        tail_count=spec.p - sum(sizes),
    )


# ---------------------------------------------------------------------------
# Orthonormal bases (eigenvectors without forming p x p matrices)
# ---------------------------------------------------------------------------


class OrthonormalBasis:
    """A ``p x p`` orthogonal matrix ``V`` applied implicitly.

    Subclasses implement ``apply`` (``V @ C``) and ``project`` (``V.T @ X``).
    Column order is the basis' natural order; callers hold any permutation.
    """

    p: int

    def apply(self, coef: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def column(self, idx: int) -> np.ndarray:
        e = np.zeros((self.p, 1))
        e[idx, 0] = 1.0
        return self.apply(e)[:, 0]

    def matrix(self) -> np.ndarray:
        if self.p > MATERIALIZE_LIMIT:
            raise ValueError(f"p={self.p} exceeds materialization limit {MATERIALIZE_LIMIT}")
        return self.apply(np.eye(self.p))


@dataclass(frozen=True)
class BlockDCTBasis(OrthonormalBasis):
    """Per-block orthonormal DCT-II frames followed by unit vectors.

    The first DCT vector of a block is its normalized indicator, so the natural
    order lists the block indicators first (one per block), then every block's
    remaining contrasts in block order, then the untouched tail coordinates.
    """

    sizes: tuple[int, ...]
    p: int
    starts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        starts = tuple(int(s) for s in np.cumsum((0,) + tuple(self.sizes[:-1]))) if self.sizes else ()
        object.__setattr__(self, "starts", starts)
        if sum(self.sizes) > self.p:
            raise ValueError("block sizes exceed p")

    def _layout(self) -> np.ndarray:
        """Row of the coefficient matrix feeding each position of the DCT layout."""
        nb = len(self.sizes)
        rows = np.empty(self.p, dtype=np.intp)
        nxt = nb
        for b, (a, k) in enumerate(zip(self.starts, self.sizes)):
            rows[a] = b
            rows[a + 1 : a + k] = np.arange(nxt, nxt + k - 1)
            nxt += k - 1
        end = sum(self.sizes)
        rows[end:] = np.arange(nxt, nxt + self.p - end)
        return rows

    def apply(self, coef: np.ndarray) -> np.ndarray:
        coef = np.asarray(coef, dtype=float)
        laid = coef[self._layout()]
        out = np.empty_like(laid)
        for a, k in zip(self.starts, self.sizes):
            out[a : a + k] = idct(laid[a : a + k], type=2, norm="ortho", axis=0)
        end = sum(self.sizes)
        out[end:] = laid[end:]
        return out

    def project(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        laid = np.empty_like(X)
        for a, k in zip(self.starts, self.sizes):
            laid[a : a + k] = dct(X[a : a + k], type=2, norm="ortho", axis=0)
        end = sum(self.sizes)
        laid[end:] = X[end:]
        out = np.empty_like(laid)
        out[self._layout()] = laid
        return out


class HouseholderBasis(OrthonormalBasis):
    """``Q = H_0 H_1 ... H_{m-1}`` from a Householder QR of a random ``p x m`` frame.

    The first ``m`` columns of ``Q`` are a seeded random orthonormal set; the
    rest complete it to a basis of ``R^p``.
    """

    def __init__(self, p: int, m: int, seed: int):
        self.p = p
        self.m = m
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x51A7,)))
        A = rng.standard_normal((p, m))
        self.reflectors = []
        for k in range(m):
            x = A[k:, k].copy()
            alpha = -math.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
            x[0] -= alpha
            u = np.zeros(p)
            u[k:] = x / np.linalg.norm(x)
            A -= 2.0 * np.outer(u, u @ A)
            self.reflectors.append(u)

    def apply(self, coef: np.ndarray) -> np.ndarray:
        out = np.array(coef, dtype=float, copy=True)
        for u in reversed(self.reflectors):
            out -= 2.0 * np.outer(u, u @ out)
        return out

    def project(self, X: np.ndarray) -> np.ndarray:
        out = np.array(X, dtype=float, copy=True)
        for u in self.reflectors:
            out -= 2.0 * np.outer(u, u @ out)
        return out


@dataclass(frozen=True)
class EigenModel:
    """Eigen-representation of a covariance model.

    ``eigenvalues`` are sorted descending; component ``j`` (0-based here) is
    basis column ``order[j]``.
    """

    eigenvalues: np.ndarray
    order: np.ndarray
    basis: OrthonormalBasis
    m: int

    @property
    def p(self) -> int:
        return self.basis.p

    def eigenvector(self, j: int) -> np.ndarray:
        return self.basis.column(int(self.order[j]))

    def synthesize(self, Z: np.ndarray) -> np.ndarray:
        """``X = sum_j sqrt(lambda_j) v_j z_j^T`` for scores ``Z`` in component order."""
        coef = np.empty_like(Z, dtype=float)
        coef[self.order] = np.sqrt(self.eigenvalues)[:, None] * Z
        return self.basis.apply(coef)

    def project(self, X: np.ndarray) -> np.ndarray:
        """Raw population scores ``V^T X`` in component order."""
        return self.basis.project(X)[self.order]


def eigen_model(spec: Union[SpikeSpec, BlockSpec]) -> EigenModel:
    """Build the eigen-representation of a spike or block model."""
    if isinstance(spec, BlockSpec):
        spectrum = block_eigenvalues(spec)
        basis = BlockDCTBasis(spectrum.sizes, spec.p)
        natural = np.concatenate(
            [spectrum.spikes]
            + [np.full(k - 1, w) for k, w in zip(spectrum.sizes, spectrum.within)]
            + [np.full(spectrum.tail_count, spectrum.tail_value)]
        )
        m = spec.m
    elif isinstance(spec, SpikeSpec):
        m = spec.m
        if spec.basis == "random":
            basis = HouseholderBasis(spec.p, m, spec.basis_seed)
        else:
            if m == 0:
                basis = BlockDCTBasis((), spec.p)
            else:
                basis = BlockDCTBasis((spec.p // m,) * m, spec.p)
        natural = np.concatenate([np.asarray(spec.sigma2) * spec.p, spec.tail_eigenvalues()])
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")
    order = np.argsort(-natural, kind="stable")
    return EigenModel(eigenvalues=natural[order], order=order, basis=basis, m=m)


def materialize_covariance(spec: Union[SpikeSpec, BlockSpec], limit: int = MATERIALIZE_LIMIT) -> np.ndarray:
    """Explicit ``p x p`` covariance matrix.

    Block models are assembled entry by entry from their definition; spike
    models as ``V diag(lambda) V^T`` from their basis.
    """
    if spec.p > limit:
        raise ValueError(f"p={spec.p} exceeds materialization limit {limit}")
    if isinstance(spec, BlockSpec):
        sigma = spec.sigma2 * np.eye(spec.p)
        a = 0
        for k, (_, rho) in zip(spec.sizes, spec.blocks):
            sigma[a : a + k, a : a + k] = spec.sigma2 * ((1 - rho) * np.eye(k) + rho)
            a += k
        return sigma
    em = eigen_model(spec)
    V = em.basis.matrix()[:, em.order]
    cov = (V * em.eigenvalues) @ V.T
    return (cov + cov.T) / 2
