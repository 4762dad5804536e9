"""Sample PCA through the ``n x n`` dual Gram matrix.

For ``p >> n`` the nonzero spectrum of ``X X^T / divisor`` equals that of
``X^T X / divisor``; the dual eigenvectors ``u_j`` give the primal ones as
``X u_j / ||X u_j||`` and the standardized scores as ``sqrt(divisor) * u_j``.

Divisor conventions: uncentered PCA divides by ``n`` (``ddof=0``), centered PCA by
``n - 1`` (``ddof=1``). Both can be overridden through ``ddof``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ZERO_TOL = 1e-12


def _divisor(n: int, centered: bool, ddof: Optional[int]) -> int:
    if ddof is None:
        ddof = 1 if centered else 0
    div = n - ddof
    if div < 1:
        raise ValueError(f"divisor n - ddof = {div} must be positive")
    return div


def _prepare(X, centered: bool) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d (variables x observations) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    if centered:
        X = X - X.mean(axis=1, keepdims=True)
    return X


def dual_gram(X, centered: bool = False, ddof: Optional[int] = None) -> np.ndarray:
    """``X^T X / (n - ddof)`` for a ``p x n`` data matrix (rows centered first if asked)."""
    X = _prepare(X, centered)
    n = X.shape[1]
    if n < 2:
        raise ValueError("need at least two observations")
    G = X.T @ X / _divisor(n, centered, ddof)
    return (G + G.T) / 2


@dataclass(frozen=True)
class PcaResult:
    """Top-``k`` sample eigensystem.

    Attributes
    ----------
    d : (k,) sample eigenvalues, descending.
    U_hat : (n, k) orthonormal dual eigenvectors.
    Zhat : (k, n) standardized sample scores ``v_hat_j^T X / sqrt(d_j)``.
    Shat : (k, n) raw sample scores ``v_hat_j^T X``.
    centered : whether rows were centered.
    divisor : denominator of the sample covariance.
    warnings : messages for components whose eigenvalue vanished.
    """

    d: np.ndarray
    U_hat: np.ndarray
    Zhat: np.ndarray
    Shat: np.ndarray
    centered: bool
    divisor: int
    warnings: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.d)


def _sign_fix(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def pca_decompose(X, k: int, centered: bool = False, ddof: Optional[int] = None) -> PcaResult:
    """Top-``k`` sample PCA of a ``p x n`` matrix via its dual Gram matrix.

    Each dual eigenvector is flipped so its largest-magnitude entry is
    positive. A vanishing eigenvalue leaves its score rows at zero and is
    reported in ``warnings`` instead of raising.
    """
    Xc = _prepare(X, centered)
    p, n = Xc.shape
    kmax = min(p, n - 1 if centered else n)
    if not 1 <= k <= kmax:
        raise ValueError(f"k={k} outside 1..{kmax}")
    div = _divisor(n, centered, ddof)
    G = Xc.T @ Xc
    G = (G + G.T) / 2
    vals, vecs = np.linalg.eigh(G)
    order = np.argsort(-vals, kind="stable")[:k]
    lam = np.clip(vals[order], 0.0, None)
    U = _sign_fix(vecs[:, order])

    scale = lam.max() if lam.size else 0.0
    alive = lam > ZERO_TOL * max(scale, 1.0) if scale > 0 else np.zeros(k, dtype=bool)
    Shat = np.zeros((k, n))
    Zhat = np.zeros((k, n))
    Shat[alive] = (np.sqrt(lam[alive])[:, None] * U[:, alive].T)
    Zhat[alive] = np.sqrt(div) * U[:, alive].T
    notes = tuple(
        f"component {j + 1}: zero sample eigenvalue, scores set to 0"
        for j in np.flatnonzero(~alive)
    )
    d = np.where(alive, lam / div, 0.0)
    return PcaResult(
        d=d, U_hat=U, Zhat=Zhat, Shat=Shat, centered=centered, divisor=div, warnings=notes
    )


def primal_eigenvectors(X, result: PcaResult) -> np.ndarray:
    """``p x k`` sample eigenvectors ``X u_j / ||X u_j||`` (zero columns where ``d_j = 0``)."""
    Xc = _prepare(X, result.centered)
    V = Xc @ result.U_hat
    norms = np.linalg.norm(V, axis=0)
    out = np.zeros_like(V)
    ok = result.d > 0
    out[:, ok] = V[:, ok] / norms[ok]
    return out
