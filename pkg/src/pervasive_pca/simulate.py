"""Seeded data generation through the eigen-representation of a model.

Scores are drawn first and mapped to data, ``X = sum_j sqrt(lambda_j) v_j z_j^T``,
so the population scores of every component are known exactly.

Random streams
--------------
Score rows are drawn in chunks of ``CHUNK_ROWS`` rows. Chunk ``c`` uses the
stream ``SeedSequence(seed, spawn_key=(c,))``, filled row-major with ``n``
values per row. Row ``j`` therefore only depends on ``(seed, n, j)``: it does not
change with ``p`` or with how many worker threads draw the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import BlockSpec, EigenModel, SpikeSpec, eigen_model

CHUNK_ROWS = 256


@dataclass(frozen=True)
class ScoreDistribution:
    """Unit-variance distribution of standardized population scores."""

    kind: str = "normal"
    df: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("normal", "t"):
            raise ValueError(f"unknown score distribution {self.kind!r}")
        if self.kind == "t":
            if self.df is None or int(self.df) != self.df or self.df <= 4:
                raise ValueError("student-t scores need integer df > 4 (finite fourth moment)")

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(shape)
        return rng.standard_t(self.df, shape) * math.sqrt((self.df - 2) / self.df)


NORMAL = ScoreDistribution()


def chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def draw_scores(
    dist: ScoreDistribution,
    p: int,
    n: int,
    seed: int,
    start: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Draw rows ``start .. start+p-1`` of the score matrix for ``seed``.

    Returns a ``p x n`` array of i.i.d. unit-variance entries.
    """
    if p < 0 or n < 1:
        raise ValueError("need p >= 0 and n >= 1")
    out = np.empty((p, n))
    if p == 0:
        return out
    first, last = start // CHUNK_ROWS, (start + p - 1) // CHUNK_ROWS

    def fill(chunk: int) -> None:
        block = dist.sample(chunk_generator(seed, chunk), (CHUNK_ROWS, n))
        lo = max(start, chunk * CHUNK_ROWS)
        hi = min(start + p, (chunk + 1) * CHUNK_ROWS)
        out[lo - start : hi - start] = block[lo - chunk * CHUNK_ROWS : hi - chunk * CHUNK_ROWS]

    chunks = range(first, last + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, chunks))
    else:
        for c in chunks:
            fill(c)
    return out


@dataclass(frozen=True)
class Dataset:
    """Generated data ``X`` (``p x n``, observations in columns) and its scores.

    ``Z[j]`` holds the standardized population scores of component ``j+1``;
    components are ordered by decreasing population eigenvalue.
    """

    X: np.ndarray
    Z: np.ndarray
    spec: Union[SpikeSpec, BlockSpec]
    seed: int
    dist: ScoreDistribution
    model: EigenModel

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.model.eigenvalues

    @property
    def m(self) -> int:
        return self.model.m

    def top_scores(self) -> np.ndarray:
        """``n x m`` matrix whose columns are the spike scores ``z_1 .. z_m``."""
        return self.Z[: self.m].T


def generate_dataset(
    spec: Union[SpikeSpec, BlockSpec],
    dist: ScoreDistribution = NORMAL,
    seed: int = 0,
    n: Optional[int] = None,
    threads: int = 1,
) -> Dataset:
    """Draw a dataset whose population covariance is the model covariance.

    ``n`` defaults to ``spec.n`` for spike models and is required for block
    models.
    """
    if n is None:
        if not isinstance(spec, SpikeSpec):
            raise ValueError("n is required for block models")
        n = spec.n
    model = eigen_model(spec)
    Z = draw_scores(dist, spec.p, n, seed, threads=threads)
    X = model.synthesize(Z)
    X.flags.writeable = False
    Z.flags.writeable = False
    return Dataset(X=X, Z=Z, spec=spec, seed=seed, dist=dist, model=model)


def population_scores(ds: Dataset, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw and standardized population scores of component ``j`` (1-based).

    Returns ``(s_j, z_j)`` with ``s_j = v_j^T X`` and ``z_j = s_j / sqrt(lambda_j)``.
    For ``lambda_j = 0`` the standardized scores are returned as zeros.
    """
    if not 1 <= j <= ds.p:
        raise IndexError(f"component {j} outside 1..{ds.p}")
    v = ds.model.eigenvector(j - 1)
    s = v @ ds.X
    lam = ds.eigenvalues[j - 1]
    z = s / math.sqrt(lam) if lam > 0 else np.zeros_like(s)
    return s, z
