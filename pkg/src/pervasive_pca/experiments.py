"""Seeded Monte Carlo studies of the large-``p`` and large-``n`` claims.

Every study takes a master seed. Replicate blocks draw from
``SeedSequence(seed, spawn_key=(tag, ...))`` keyed only by their coordinates
(study tag, sample size, block index, replicate), so results do not depend on
how many threads execute the blocks or in which order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .diagnose import align_signs
from .limit import build_w, noise_variance_asymptotic, predict_sample_eigenvalues, predict_scores
from .model import SpikeSpec, eigen_model
from .pca import pca_decompose
from .simulate import NORMAL, ScoreDistribution, draw_scores, generate_dataset

REPLICATE_BLOCK = 1000
QUANTILES = (0.05, 0.5, 0.95)

_TAG_NOISE = 1
_TAG_CHISQ = 2
_TAG_LLN = 3
_TAG_CONV = 4


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def replicate_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit child seed for replicate coordinates ``key``."""
    state = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def summarize(values: np.ndarray) -> dict:
    """Replicate summary: count, mean, unbiased sd, its standard error and fixed quantiles.

    ``sd_se`` is the large-sample standard error of the sd,
    ``sd * sqrt((kurtosis - 1) / (4 R))``, with the sample (non-excess) kurtosis.
    """
    v = np.asarray(values, dtype=float)
    out = {"replicates": int(v.size), "mean": float(np.mean(v)) if v.size else math.nan}
    out["sd"] = float(np.std(v, ddof=1)) if v.size > 1 else math.nan
    out["sd_se"] = math.nan
    if v.size > 1 and out["sd"] > 0:
        kurt = float(stats.kurtosis(v, fisher=False))
        out["sd_se"] = out["sd"] * math.sqrt(max(kurt - 1.0, 0.0) / (4 * v.size))
    for q in QUANTILES:
        out[f"q{int(round(q * 100)):02d}"] = float(np.quantile(v, q)) if v.size else math.nan
    return out


@dataclass
class SweepResult:
    """Long-form results: one row per grid point x statistic (x extra keys).

    ``frame`` always has the columns ``grid_name``, ``grid_value``,
    ``statistic``, ``replicates``, ``mean``, ``sd``, ``sd_se`` and the quantile
    columns.
    ``flags`` collects warnings such as undefined sds for a single replicate.
    """

    name: str
    grid_name: str
    grid: np.ndarray
    frame: pd.DataFrame
    raw: Optional[dict] = None
    flags: tuple[str, ...] = ()

    def series(self, statistic: str, column: str = "sd", **where) -> pd.Series:
        df = self.frame[self.frame["statistic"] == statistic]
        for key, value in where.items():
            df = df[np.isclose(df[key], value)] if isinstance(value, float) else df[df[key] == value]
        return df.set_index("grid_value")[column]


# ---------------------------------------------------------------------------
# Noise terms of a score pair
# ---------------------------------------------------------------------------


def noise_replicates(
    sigma2: Sequence[float],
    n: int,
    R: int,
    seed: int,
    j: int = 1,
    k: int = 2,
    fixed_scores: bool = True,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``R`` replicates of the noise terms ``(eps_ij, eps_ik)``.

    Each replicate draws ``n x m`` standard normal population scores, forms
    ``W`` and evaluates the noise terms with every ``z_il`` fixed to 1
    (``fixed_scores=True``) or at the first observation's own scores.
    The normal draws depend only on ``(seed, n, m, block)``, so sweeps over the
    signal strengths reuse the same scores (common random numbers).
    """
    s2 = np.asarray(sigma2, dtype=float)
    m = s2.size
    if m < 1 or j == k or not (1 <= j <= m and 1 <= k <= m):
        raise ValueError("need distinct components j, k within 1..m")
    sig = np.sqrt(s2)
    others = [l for l in range(m) if l not in (j - 1, k - 1)]
    blocks = [(b, min(REPLICATE_BLOCK, R - b * REPLICATE_BLOCK)) for b in range(math.ceil(R / REPLICATE_BLOCK))]

    def run(block):
        b, size = block
        Z = _rng(seed, _TAG_NOISE, n, m, b).standard_normal((size, n, m))
        Zt = Z * sig
        W = np.matmul(Zt.transpose(0, 2, 1), Zt)
        vals, vecs = np.linalg.eigh(W)
        vals, vecs = vals[:, ::-1], vecs[:, :, ::-1]
        diag = np.diagonal(vecs, axis1=1, axis2=2)
        vecs = vecs * np.where(diag < 0, -1.0, 1.0)[:, None, :]
        z = np.ones((size, m)) if fixed_scores else Z[:, 0, :]
        out = []
        for c in (j - 1, k - 1):
            if not others:
                out.append(np.zeros(size))
                continue
            contrib = (sig[others] * z[:, others] * vecs[:, others, c]).sum(axis=1)
            out.append(np.sqrt(n / vals[:, c]) * contrib)
        return out

    parts = _map(run, blocks, threads)
    eps_j = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0)
    eps_k = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0)
    return eps_j, eps_k


def _noise_rows(sigma2, n, R, seed, j, k, fixed_scores, threads, extra):
    eps_j, eps_k = noise_replicates(sigma2, n, R, seed, j, k, fixed_scores, threads)
    analytic = _analytic(sigma2, n, j, k)
    rows = []
    for comp, eps, asd in ((j, eps_j, analytic[0]), (k, eps_k, analytic[1])):
        row = dict(extra)
        row.update({"statistic": f"eps_{comp}", "component": comp})
        row.update(summarize(eps))
        row["analytic_sd"] = asd
        rows.append(row)
    return rows, (eps_j, eps_k)


def _analytic(sigma2, n, j, k):
    try:
        nv = noise_variance_asymptotic(sigma2, n, j, k)
    except ValueError:
        return math.nan, math.nan
    return nv.sd_j, nv.sd_k


def _flags(R: int) -> tuple[str, ...]:
    return ("R=1: standard deviations undefined",) if R < 2 else ()


def noise_sd_sweep(
    sigma2: Sequence[float],
    n_grid: Sequence[int],
    R: int = 10_000,
    seed: int = 0,
    j: int = 1,
    k: int = 2,
    fixed_scores: bool = True,
    keep_raw: bool = False,
    threads: int = 1,
) -> SweepResult:
    """Monte Carlo sd of ``eps_ij`` and ``eps_ik`` over a grid of sample sizes.

    With fewer than three spikes the noise terms are identically zero; the sweep
    still runs, reports zero sds and says so in ``flags``.
    """
    rows, raw = [], {}
    for n in n_grid:
        r, eps = _noise_rows(sigma2, int(n), R, seed, j, k, fixed_scores, threads,
                             {"grid_name": "n", "grid_value": int(n)})
        rows += r
        if keep_raw:
            raw[int(n)] = eps
    flags = _flags(R) + (("m < 3: noise terms identically zero",) if len(sigma2) < 3 else ())
    return SweepResult("noise_sd", "n", np.asarray(n_grid), pd.DataFrame(rows), raw or None, flags)


def sigma3_sweep(
    sigma2: Sequence[float],
    sweep_values: Sequence[float],
    n: int = 60,
    R: int = 10_000,
    seed: int = 0,
    swept: int = 3,
    curve_component: Optional[int] = None,
    curve_values: Sequence[float] = (),
    j: int = 1,
    k: int = 2,
    fixed_scores: bool = True,
    threads: int = 1,
) -> SweepResult:
    """Monte Carlo noise sd as a function of one signal strength (``sigma_3^2`` by default).

    ``curve_component``/``curve_values`` repeat the sweep for several values of
    another strength (``sigma_2^2`` in the usual set-up). Sweeps whose values
    would break the strict ordering of the strengths are rejected.
    """
    if len(sigma2) < 3:
        raise ValueError("noise terms vanish identically for m < 3")
    curves = list(curve_values) if curve_component else [None]
    rows = []
    for cv in curves:
        for v in sweep_values:
            s2 = np.array(sigma2, dtype=float)
            s2[swept - 1] = v
            if cv is not None:
                s2[curve_component - 1] = cv
            if np.any(np.diff(s2) >= 0):
                raise ValueError(f"signal strengths {s2.tolist()} not strictly decreasing")
            extra = {"grid_name": f"sigma{swept}_sq", "grid_value": float(v)}
            if curve_component:
                extra[f"sigma{curve_component}_sq"] = float(cv)
            r, _ = _noise_rows(s2, n, R, seed, j, k, fixed_scores, threads, extra)
            for row in r:
                row["n"] = n
            rows += r
    return SweepResult("sigma_sweep", f"sigma{swept}_sq", np.asarray(sweep_values, dtype=float),
                       pd.DataFrame(rows), None, _flags(R))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` on ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# Single-spike chi-square law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChiSquareReport:
    n: int
    R: int
    mean: float
    var: float
    ks_statistic: float
    ks_pvalue: float


def chi_square_check(sigma2_1: float, n: int, R: int, seed: int = 0, threads: int = 1) -> ChiSquareReport:
    """Distribution of ``d_1(W) / sigma_1^2`` for one spike with normal scores.

    Compares against ``chi^2_n``: mean ``n``, variance ``2n`` and a
    Kolmogorov-Smirnov statistic.
    """
    blocks = [(b, min(REPLICATE_BLOCK * 10, R - b * REPLICATE_BLOCK * 10))
              for b in range(math.ceil(R / (REPLICATE_BLOCK * 10)))]

    def run(block):
        b, size = block
        z = _rng(seed, _TAG_CHISQ, n, b).standard_normal((size, n))
        zt = z * math.sqrt(sigma2_1)
        return np.einsum("rn,rn->r", zt, zt) / sigma2_1

    ratio = np.concatenate(_map(run, blocks, threads))
    ks = stats.kstest(ratio, stats.chi2(df=n).cdf)
    return ChiSquareReport(
        n=n, R=R, mean=float(ratio.mean()), var=float(ratio.var(ddof=1)) if R > 1 else math.nan,
        ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue),
    )


# ---------------------------------------------------------------------------
# Law of large numbers for the non-spiked part
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LLNReport:
    p_grid: np.ndarray
    deviations: np.ndarray  # replicates x len(p_grid)
    tau2: float

    @property
    def median(self) -> np.ndarray:
        return np.median(self.deviations, axis=0)

    @property
    def maximum(self) -> np.ndarray:
        return self.deviations.max(axis=0)


def tail_gram_deviation(spec: SpikeSpec, n: int, seed: int, dist: ScoreDistribution = NORMAL) -> float:
    """``max |(1/p) sum_{i>m} lambda_i z_i z_i^T - tau2 I|`` for one draw."""
    em = eigen_model(spec)
    lam = em.eigenvalues[em.m:]
    if lam.size == 0 or not np.any(lam):
        return 0.0
    Zt = draw_scores(dist, spec.p - em.m, n, seed, start=em.m)
    G = (Zt * lam[:, None]).T @ Zt / spec.p
    return float(np.abs(G - spec.tau2 * np.eye(n)).max())


def lln_check(
    spec: SpikeSpec,
    n: int,
    p_grid: Sequence[int],
    R: int = 50,
    seed: int = 0,
    dist: ScoreDistribution = NORMAL,
    threads: int = 1,
) -> LLNReport:
    """Deviation of the non-spiked Gram part from ``tau2 I_n`` across ``p``."""
    def run(args):
        r, p = args
        return tail_gram_deviation(spec.with_p(int(p)).with_n(n), n, replicate_seed(seed, _TAG_LLN, r), dist)

    cells = [(r, p) for r in range(R) for p in p_grid]
    dev = np.array(_map(run, cells, threads)).reshape(R, len(p_grid))
    return LLNReport(p_grid=np.asarray(p_grid), deviations=dev, tau2=spec.tau2)


# ---------------------------------------------------------------------------
# Sample scores versus their limit
# ---------------------------------------------------------------------------


def convergence_replicate(spec: SpikeSpec, seed: int, dist: ScoreDistribution = NORMAL, threads: int = 1) -> dict:
    """Compare sample PCA of one dataset with the limit built from its own spike scores.

    Uses uncentered PCA with divisor ``n``, matching the limit's normalization.
    """
    ds = generate_dataset(spec, dist, seed, threads=threads)
    n, m = spec.n, spec.m
    k = min(spec.p, n)
    res = pca_decompose(ds.X, k)
    we = build_w(ds.top_scores(), spec.sigma2)
    pred = predict_scores(we)
    aligned, _ = align_signs(res.Zhat[:m], pred)
    diff = aligned - pred
    out = {
        "score_rmse": float(np.sqrt(np.mean(diff**2))),
        "score_maxabs": float(np.abs(diff).max()),
    }
    observed = res.d / spec.p
    limit = predict_sample_eigenvalues(we, spec.tau2, n, k)
    for j in range(m):
        out[f"eig_rel_err_{j + 1}"] = float(abs(observed[j] - limit[j]) / observed[j])
    if k > m and spec.tau2 > 0:
        tail_med = float(np.median(observed[m:]))
        out["tail_median_rel_err"] = abs(tail_med - spec.tau2 / n) / (spec.tau2 / n)
    return out


def convergence_study(
    spec: SpikeSpec,
    p_grid: Sequence[int],
    R: int = 1,
    seed: int = 0,
    dist: ScoreDistribution = NORMAL,
    threads: int = 1,
) -> SweepResult:
    """Sample-versus-limit errors across dimensions.

    Replicate ``r`` uses the same seed at every ``p``, so its spike scores (and
    hence ``W`` and the predicted scores) are shared along the grid.
    """
    rows, raw = [], {}
    for p in p_grid:
        reps = [convergence_replicate(spec.with_p(int(p)), replicate_seed(seed, _TAG_CONV, r), dist, threads)
                for r in range(R)]
        raw[int(p)] = reps
        for stat in reps[0]:
            row = {"grid_name": "p", "grid_value": int(p), "statistic": stat}
            row.update(summarize([rep[stat] for rep in reps]))
            rows.append(row)
    return SweepResult("convergence", "p", np.asarray(p_grid), pd.DataFrame(rows), raw, _flags(R))
