"""Command-line entry point: ``pervasive-pca {simulate,verify,noise,diagnose}``.

Exit codes: 0 success, 1 a configured check failed, 2 usage or config error.

Every run writes its outputs plus ``manifest.json`` into ``--out``. ``--config``
accepts a path or the name of a bundled config (``pervasive-pca configs``
lists them). ``--seed`` overrides the config's ``seed``. ``--threads`` only
changes speed: outputs are byte-identical for any thread count.

Config sections per subcommand
------------------------------
simulate::

    seed: 1
    model: {...}              # see pervasive_pca.config
    scores: {kind: normal}    # optional

verify (any subset of the three studies)::

    seed: 1
    convergence:
      model: {kind: spike, sigma2: [12, 8], tau2: 1.0, n: 50}
      p_grid: [500, 5000, 50000]
      replicates: 1
      checks: {score_rmse_max: 0.05, eig_rel_err_max: 0.05,
               tail_median_rel_err_max: 0.10, decreasing: [score_rmse]}
    lln:
      model: {kind: spike, sigma2: [], tau2: 1.0, n: 10}
      p_grid: [100, 1000, 10000]
      replicates: 50
      checks: {max_deviation_max: 0.1, decreasing_median: true}
    chisq:
      sigma2: 1.0
      n: 10
      replicates: 100000
      checks: {mean_band: [9.8, 10.2], var_band: [19, 21]}

noise::

    seed: 1
    noise:
      figure: graphsd | graphsd2
      sigma2: [12, 8, 0.7, 0.1, 0.02]
      pair: [1, 2]
      replicates: 10000
      swept_component: 3
      sweep_values: [0.2, 0.7, 1.4]
      n_grid: [40, 80, 120, 160, 200, 240]   # graphsd
      n: 60                                  # graphsd2
      curve_component: 2                     # graphsd2
      curve_values: [6, 8, 10]               # graphsd2
    checks:                                  # optional
      slope_band: [-0.55, -0.45]
      doubling: {low: 0.7, high: 1.4, n: 60, band: [1.8, 2.2]}
      ratio: {sweep_value: 0.7, band: [1.2, 1.6]}
      increasing: true                       # graphsd2
      flat_component: 1                      # graphsd2

diagnose::

    diagnose:
      eigenvalues: [399, 204, 132, 99, 93]   # or sigma2: [...], or matrix: path.csv
      p: 3000
      m: 5                                   # or auto
      n: 100                                 # optional sample size for noise sds
      target_sd: 0.15
      pairs: [[1, 2]]                        # optional, default all pairs
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .config import Config, ConfigError, bundled_configs, model_from, scores_from, spec_to_dict
from .diagnose import (
    SignalEstimate,
    Thresholds,
    align_signs,
    classify_transform,
    estimate_signals,
    fit_pair_transform,
    required_sample_size,
)
from .experiments import (
    chi_square_check,
    convergence_study,
    lln_check,
    loglog_slope,
    noise_sd_sweep,
    sigma3_sweep,
)
from .io import CsvFormatError, read_matrix, write_frame, write_json, write_manifest, write_matrix, write_rows
from .limit import noise_variance_asymptotic
from .model import SpikeSpec
from .pca import pca_decompose
from .simulate import generate_dataset

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

SUMMARY_COLUMNS = ["replicates", "mean", "sd", "sd_se", "q05", "q50", "q95"]


class CheckFailure(Exception):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pervasive-pca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="config path or bundled config name")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: ./out/<command>)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    common(sub.add_parser("simulate", help="generate a dataset and its population scores"))
    common(sub.add_parser("verify", help="check large-p limits against simulation"))
    common(sub.add_parser("noise", help="Monte Carlo noise-sd sweeps (figure data)"))
    d = sub.add_parser("diagnose", help="signal strengths, noise sds, sample sizes, transforms")
    common(d, config_required=False)
    d.add_argument("--matrix", help="data matrix CSV")
    d.add_argument("--orientation", choices=("vars-rows", "obs-rows"), default="vars-rows")
    d.add_argument("--centered", type=_bool, default=True, help="center variables before PCA (default true)")
    d.add_argument("--population-scores", help="CSV of population scores (components in rows)")
    d.add_argument("--m", default=None, help="spike count or 'auto'")
    d.add_argument("--target-sd", type=float, default=None)
    sub.add_parser("configs", help="list bundled configs")
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("out") / args.command
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable ({exc.strerror})") from None
    return out


def _seed(cfg: Config, args) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.get("seed", int, default=0)


def _effective(cfg: Config, seed: int) -> dict:
    data = dict(cfg.data)
    data["seed"] = seed
    return data


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    cfg = Config.load(args.config)
    seed = _seed(cfg, args)
    spec, n = model_from(cfg.section("model"))
    if n is None:
        raise cfg.error("model", "missing required field 'model.n'")
    dist = scores_from(cfg)
    out = _out_dir(args)
    ds = generate_dataset(spec, dist, seed, n=n, threads=args.threads)
    files = [
        write_matrix(out / "X.csv", ds.X, "variable", "obs"),
        write_matrix(out / "population_scores.csv", ds.Z[: ds.m], "component", "obs"),
    ]
    meta = {
        "orientation": "vars-rows",
        "shape": [ds.p, ds.n],
        "spec": spec_to_dict(spec),
        "n": ds.n,
        "seed": seed,
        "scores": {"kind": dist.kind, "df": dist.df},
        "spike_count": ds.m,
        "spike_eigenvalues": ds.eigenvalues[: ds.m],
        "population_scores": "rows are components 1..m in decreasing eigenvalue order",
    }
    files.append(write_json(out / "X.meta.json", meta))
    write_manifest(out, "simulate", cfg.source, _effective(cfg, seed), seed, args.threads, argv, files)
    print(f"wrote {ds.p} x {ds.n} dataset to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _check(rows, study, name, value, threshold, passed):
    rows.append({"study": study, "check": name, "value": value, "threshold": threshold, "passed": bool(passed)})


def _verify_convergence(sec: Config, seed, threads, out, checks):
    spec, _ = model_from(sec.section("model"), require_p=False)
    if not isinstance(spec, SpikeSpec):
        raise sec.error("model.kind", "convergence study needs a spike model")
    p_grid = sec.get("p_grid", "ints", check=lambda g: len(g) > 0 and min(g) >= spec.m, hint="non-empty list of p >= m")
    R = sec.get("replicates", int, default=1, check=lambda r: r >= 1)
    res = convergence_study(spec, p_grid, R, seed, threads=threads)
    path = write_frame(out / "convergence.csv", res.frame, ["grid_name", "grid_value", "statistic"] + SUMMARY_COLUMNS)
    last = res.frame[res.frame["grid_value"] == p_grid[-1]].set_index("statistic")["mean"]
    ch = sec.section("checks") if sec.has("checks") else None
    if ch is not None:
        if ch.has("score_rmse_max"):
            t = ch.get("score_rmse_max", float)
            _check(checks, "convergence", f"score_rmse at p={p_grid[-1]}", last["score_rmse"], t, last["score_rmse"] < t)
        if ch.has("eig_rel_err_max"):
            t = ch.get("eig_rel_err_max", float)
            for j in range(1, spec.m + 1):
                v = last[f"eig_rel_err_{j}"]
                _check(checks, "convergence", f"eig_rel_err_{j} at p={p_grid[-1]}", v, t, v < t)
        if ch.has("tail_median_rel_err_max") and "tail_median_rel_err" in last:
            t = ch.get("tail_median_rel_err_max", float)
            v = last["tail_median_rel_err"]
            _check(checks, "convergence", f"tail_median_rel_err at p={p_grid[-1]}", v, t, v < t)
        for stat in ch.get("decreasing", default=[]):
            series = res.series(stat, "mean").to_numpy()
            _check(checks, "convergence", f"{stat} decreasing in p", ";".join(map(repr, series.tolist())),
                   "decreasing", bool(np.all(np.diff(series) < 0)))
    return path


def _verify_lln(sec: Config, seed, threads, out, checks):
    spec, n = model_from(sec.section("model"), require_p=False)
    p_grid = sec.get("p_grid", "ints", check=lambda g: len(g) > 0, hint="non-empty list")
    R = sec.get("replicates", int, default=50, check=lambda r: r >= 1)
    rep = lln_check(spec, n, p_grid, R, seed, threads=threads)
    rows = []
    from .experiments import summarize
    for idx, p in enumerate(p_grid):
        row = {"grid_name": "p", "grid_value": p, "statistic": "max_deviation"}
        row.update(summarize(rep.deviations[:, idx]))
        row["max"] = float(rep.deviations[:, idx].max())
        rows.append(row)
    path = write_rows(out / "lln.csv", ["grid_name", "grid_value", "statistic"] + SUMMARY_COLUMNS + ["max"], rows)
    ch = sec.section("checks") if sec.has("checks") else None
    if ch is not None:
        if ch.has("max_deviation_max"):
            t = ch.get("max_deviation_max", float)
            v = float(rep.maximum[-1])
            _check(checks, "lln", f"max deviation at p={p_grid[-1]} (all replicates)", v, t, v < t)
        if ch.get("decreasing_median", bool, default=False):
            med = rep.median
            _check(checks, "lln", "median deviation decreasing in p", ";".join(map(repr, med.tolist())),
                   "decreasing", bool(np.all(np.diff(med) < 0)))
    return path


def _verify_chisq(sec: Config, seed, threads, out, checks):
    s2 = sec.get("sigma2", float, default=1.0, check=lambda v: v > 0)
    n = sec.get("n", int, check=lambda v: v >= 1)
    R = sec.get("replicates", int, check=lambda v: v >= 2)
    rep = chi_square_check(s2, n, R, seed, threads=threads)
    rows = [
        {"statistic": "mean", "value": rep.mean, "expected": float(n)},
        {"statistic": "variance", "value": rep.var, "expected": float(2 * n)},
        {"statistic": "ks_statistic", "value": rep.ks_statistic, "expected": 0.0},
        {"statistic": "ks_pvalue", "value": rep.ks_pvalue, "expected": ""},
    ]
    path = write_rows(out / "chisq.csv", ["statistic", "value", "expected"], rows)
    ch = sec.section("checks") if sec.has("checks") else None
    if ch is not None:
        for key, label, value in (("mean_band", "mean", rep.mean), ("var_band", "variance", rep.var)):
            if ch.has(key):
                lo, hi = ch.get(key, "band", hint="[low, high]")
                _check(checks, "chisq", label, value, f"[{lo}, {hi}]", lo <= value <= hi)
    return path


def cmd_verify(args, argv) -> int:
    cfg = Config.load(args.config)
    seed = _seed(cfg, args)
    out = _out_dir(args)
    studies = {"convergence": _verify_convergence, "lln": _verify_lln, "chisq": _verify_chisq}
    present = [s for s in studies if cfg.has(s)]
    if not present:
        raise ConfigError(f"{cfg.source}: missing required field: one of {', '.join(studies)}")
    checks, files = [], []
    for name in present:
        files.append(studies[name](cfg.section(name), seed, args.threads, out, checks))
    files.append(write_rows(out / "checks.csv", ["study", "check", "value", "threshold", "passed"], checks))
    write_manifest(out, "verify", cfg.source, _effective(cfg, seed), seed, args.threads, argv, files)
    return _report_checks(checks)


def _report_checks(checks) -> int:
    failed = [c for c in checks if not c["passed"]]
    for c in checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['study']}: {c['check']} = {c['value']} (threshold {c['threshold']})")
    if failed:
        names = ", ".join(f"{c['study']}: {c['check']}" for c in failed)
        print(f"check failure: {names}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def _sd_se(frame: pd.DataFrame) -> pd.Series:
    return frame["sd_se"]


def cmd_noise(args, argv) -> int:
    cfg = Config.load(args.config)
    seed = _seed(cfg, args)
    sec = cfg.section("noise")
    figure = sec.get("figure", str, check=lambda f: f in ("graphsd", "graphsd2"), hint="graphsd or graphsd2")
    sigma2 = sec.get("sigma2", "floats", hint="list of signal strengths")
    if len(sigma2) < 3:
        raise sec.error("sigma2", f"noise terms vanish for m={len(sigma2)} < 3; need at least three spikes")
    j, k = sec.get("pair", "ints", default=[1, 2], check=lambda v: len(v) == 2 and v[0] != v[1]
                   and all(1 <= c <= len(sigma2) for c in v), hint="two distinct components")
    R = sec.get("replicates", int, default=10_000, check=lambda v: v >= 1)
    swept = sec.get("swept_component", int, default=3, check=lambda v: 1 <= v <= len(sigma2))
    values = sec.get("sweep_values", "floats")
    sweep_col = f"sigma{swept}_sq"
    out = _out_dir(args)
    checks, files = [], []
    try:
        if figure == "graphsd":
            n_grid = sec.get("n_grid", "ints", check=lambda g: len(g) > 0 and min(g) >= 1)
            frames = []
            for v in values:
                s2 = list(sigma2)
                s2[swept - 1] = v
                res = noise_sd_sweep(s2, n_grid, R, seed, j, k, threads=args.threads)
                f = res.frame.rename(columns={"grid_value": "n"})
                f[sweep_col] = v
                frames.append(f)
            frame = pd.concat(frames, ignore_index=True)
            cols = ["n", sweep_col, "component"] + SUMMARY_COLUMNS + ["analytic_sd"]
            files.append(write_frame(out / "graphsd.csv", frame, cols))
            slope_rows = []
            for v in values:
                for comp in (j, k):
                    sub = frame[(frame[sweep_col] == v) & (frame["component"] == comp)]
                    slope_rows.append({sweep_col: v, "component": comp,
                                       "slope": loglog_slope(sub["n"], sub["sd"]),
                                       "analytic_slope": loglog_slope(sub["n"], sub["analytic_sd"])})
            _noise_checks_graphsd(cfg, frame, slope_rows, sweep_col, (j, k), checks)
            slope_cols = [sweep_col, "component", "slope", "analytic_slope", "band_low", "band_high", "passed"]
            files.append(write_rows(out / "graphsd_slopes.csv", slope_cols, slope_rows))
        else:
            n = sec.get("n", int, default=60, check=lambda v: v >= 1)
            curve = sec.get("curve_component", int, default=None)
            curve_values = sec.get("curve_values", "floats", default=[])
            res = sigma3_sweep(sigma2, values, n, R, seed, swept, curve, curve_values, j, k, threads=args.threads)
            frame = res.frame.rename(columns={"grid_value": sweep_col})
            extra = [f"sigma{curve}_sq"] if curve else []
            cols = [sweep_col] + extra + ["n", "component"] + SUMMARY_COLUMNS + ["analytic_sd"]
            files.append(write_frame(out / "graphsd2.csv", frame, cols))
            _noise_checks_graphsd2(cfg, frame, sweep_col, extra, (j, k), checks)
    except ValueError as exc:
        raise sec.error("sigma2", str(exc)) from None
    if checks:
        files.append(write_rows(out / "checks.csv", ["study", "check", "value", "threshold", "passed"], checks))
    write_manifest(out, "noise", cfg.source, _effective(cfg, seed), seed, args.threads, argv, files)
    return _report_checks(checks)


def _noise_checks_graphsd(cfg, frame, slope_rows, sweep_col, pair, checks):
    if not cfg.has("checks"):
        return
    ch = cfg.section("checks")
    if ch.has("slope_band"):
        lo, hi = ch.get("slope_band", "band")
        for row in slope_rows:
            row.update(band_low=lo, band_high=hi, passed=lo <= row["slope"] <= hi)
            _check(checks, "graphsd", f"log-log slope eps_{row['component']} ({sweep_col}={row[sweep_col]})",
                   row["slope"], f"[{lo}, {hi}]", row["passed"])
    if ch.has("doubling"):
        d = ch.section("doubling")
        low, high = d.get("low", float), d.get("high", float)
        n = d.get("n", int)
        lo, hi = d.get("band", "band")
        for comp in pair:
            sel = frame[(frame["n"] == n) & (frame["component"] == comp)].set_index(sweep_col)["sd"]
            if low not in sel.index or high not in sel.index:
                raise d.error("n", f"no sweep rows for n={n} at {sweep_col} in ({low}, {high})")
            ratio = sel[high] / sel[low]
            _check(checks, "graphsd", f"sd ratio eps_{comp} {sweep_col} {high}/{low} at n={n}",
                   ratio, f"[{lo}, {hi}]", lo <= ratio <= hi)
    if ch.has("ratio"):
        r = ch.section("ratio")
        v = r.get("sweep_value", float)
        lo, hi = r.get("band", "band")
        sub = frame[frame[sweep_col] == v]
        a = sub[sub["component"] == pair[0]].set_index("n")["sd"]
        b = sub[sub["component"] == pair[1]].set_index("n")["sd"]
        for n in a.index:
            ratio = b[n] / a[n]
            _check(checks, "graphsd", f"sd(eps_{pair[1]})/sd(eps_{pair[0]}) at n={n}, {sweep_col}={v}",
                   ratio, f"[{lo}, {hi}]", lo <= ratio <= hi)


def _noise_checks_graphsd2(cfg, frame, sweep_col, extra, pair, checks):
    if not cfg.has("checks"):
        return
    ch = cfg.section("checks")
    curves = frame.groupby(extra) if extra else [((None,), frame)]
    if ch.get("increasing", bool, default=False):
        for key, sub in curves:
            for comp in pair:
                s = sub[sub["component"] == comp].sort_values(sweep_col)
                sd, se = s["sd"].to_numpy(), s["sd_se"].to_numpy()
                band = 2 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
                ok = bool(np.all(np.diff(sd) > -band))
                label = f" ({extra[0]}={key[0] if isinstance(key, tuple) else key})" if extra else ""
                _check(checks, "graphsd2", f"sd(eps_{comp}) increasing in {sweep_col}{label}",
                       ";".join(map(repr, sd.tolist())), "increasing within 2 se", ok)
    if ch.has("flat_component") and extra:
        comp = ch.get("flat_component", int)
        s = frame[frame["component"] == comp]
        for v, sub in s.groupby(sweep_col):
            sd, se = sub["sd"].to_numpy(), sub["sd_se"].to_numpy()
            spread = sd.max() - sd.min()
            band = 2 * math.sqrt(se[sd.argmax()] ** 2 + se[sd.argmin()] ** 2)
            _check(checks, "graphsd2", f"sd(eps_{comp}) flat across {extra[0]} at {sweep_col}={v}",
                   spread, f"< {band}", spread <= band)


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def _load_data_matrix(path: str, orientation: str) -> np.ndarray:
    M, _ = read_matrix(Path(path))
    return np.ascontiguousarray(M if orientation == "vars-rows" else M.T)


def _load_population_scores(path: str) -> np.ndarray:
    M, kind = read_matrix(Path(path))
    return M.T if kind == "observation" else M


def cmd_diagnose(args, argv) -> int:
    cfg = Config.load(args.config) if args.config else Config({"diagnose": {}}, "<command line>")
    sec = cfg.section("diagnose") if cfg.has("diagnose") else Config({}, cfg.source, cfg.lines, "diagnose")
    seed = args.seed
    m_opt = args.m if args.m is not None else sec.get("m", default="auto")
    if m_opt != "auto":
        try:
            m_opt = int(m_opt)
        except (TypeError, ValueError):
            raise sec.error("m", f"expected an integer or 'auto', got {m_opt!r}") from None
    target = args.target_sd if args.target_sd is not None else sec.get("target_sd", float, default=0.15,
                                                                         check=lambda v: v > 0)
    matrix_path = args.matrix or sec.get("matrix", str, default=None)
    n_obs = sec.get("n", int, default=None, check=lambda v: v is None or v >= 1)
    report: dict = {"target_sd": target}
    zhat = None
    if matrix_path:
        X = _load_data_matrix(matrix_path, args.orientation)
        p, n = X.shape
        centered = args.centered
        kmax = min(p, n - 1 if centered else n)
        if kmax < 1:
            raise CsvFormatError(f"{matrix_path}: matrix of shape {X.shape} has no principal components")
        res = pca_decompose(X, kmax, centered=centered)
        est = estimate_signals(res.d, p, m_opt)
        n_obs = n
        zhat = res.Zhat
        report.update(source="matrix", shape=[p, n], centered=centered, divisor=res.divisor,
                      warnings=list(res.warnings))
    elif sec.has("eigenvalues"):
        d = np.asarray(sec.get("eigenvalues", "floats"))
        p = sec.get("p", int, check=lambda v: v >= 1)
        try:
            est = estimate_signals(d, p, m_opt)
        except ValueError as exc:
            raise sec.error("eigenvalues", str(exc)) from None
        report.update(source="eigenvalues", p=p)
    elif sec.has("sigma2"):
        s2 = np.asarray(sec.get("sigma2", "floats"))
        if np.any(s2 <= 0) or np.any(np.diff(s2) > 0):
            raise sec.error("sigma2", "expected positive, non-increasing signal strengths")
        m_use = len(s2) if m_opt == "auto" else m_opt
        if not 0 <= m_use <= len(s2):
            raise sec.error("m", f"m={m_use} outside 0..{len(s2)}")
        est = SignalEstimate(sigma2_hat=s2[:m_use], m_hat=m_use, scree=s2)
        report.update(source="sigma2")
    else:
        raise ConfigError(f"{cfg.source}: missing required field 'diagnose.matrix', 'diagnose.eigenvalues' "
                          "or 'diagnose.sigma2' (or pass --matrix)")

    sigma2 = est.sigma2_hat
    m = est.m_hat
    report.update(scree=est.scree, sigma2_hat=sigma2, m=m, n=n_obs)
    pairs = sec.get("pairs", default=None)
    if pairs is None:
        pairs = [(a, b) for a in range(1, m + 1) for b in range(a + 1, m + 1)]
    rows = []
    for a, b in pairs:
        if not (1 <= a <= m and 1 <= b <= m) or a == b:
            raise sec.error("pairs", f"pair ({a}, {b}) outside 1..m={m}")
        try:
            nv = noise_variance_asymptotic(sigma2, n_obs or 1, a, b)
            na, nb = required_sample_size(sigma2, a, b, target)
        except ValueError as exc:
            raise sec.error("pairs", str(exc)) from None
        for comp, var, need in ((a, nv.var_j, na), (b, nv.var_k, nb)):
            rows.append({
                "j": a, "k": b, "component": comp,
                "noise_sd": math.sqrt(var) if n_obs else "",
                "unit_sd": math.sqrt(var * (n_obs or 1)),
                "required_n": need,
            })
    report["sample_sizes"] = rows

    out = _out_dir(args)
    files = [
        write_rows(out / "scree.csv", ["component", "eigenvalue", "sigma2_hat"],
                   [{"component": i + 1, "eigenvalue": v, "sigma2_hat": sigma2[i] if i < m else ""}
                    for i, v in enumerate(est.scree)]),
        write_rows(out / "sample_sizes.csv", ["j", "k", "component", "unit_sd", "noise_sd", "required_n"], rows),
    ]

    if args.population_scores:
        if zhat is None:
            raise ConfigError("--population-scores needs --matrix (sample scores come from the data)")
        pop = _load_population_scores(args.population_scores)
        if pop.shape[1] != zhat.shape[1]:
            raise CsvFormatError(f"{args.population_scores}: {pop.shape[1]} observations, data has {zhat.shape[1]}")
        q = min(pop.shape[0], zhat.shape[0])
        t_pairs = [(a, b) for a, b in pairs if b <= q] or [(a, b) for a in range(1, q + 1) for b in range(a + 1, q + 1)]
        trows = []
        for a, b in t_pairs:
            ref = pop[[a - 1, b - 1]]
            sample, _ = align_signs(zhat[[a - 1, b - 1]], ref)
            t = fit_pair_transform(sample, ref)
            cls = classify_transform(t, Thresholds())
            trows.append({"j": a, "k": b, "scale_x": t.scale_x, "scale_y": t.scale_y,
                          "angle_degrees": t.angle_degrees, "residual": t.residual,
                          "reflection": t.reflection, "label": cls.label})
        report["transforms"] = trows
        files.append(write_rows(out / "transforms.csv", ["j", "k", "scale_x", "scale_y", "angle_degrees",
                                                         "residual", "reflection", "label"], trows))
    files.append(write_json(out / "report.json", report))
    write_manifest(out, "diagnose", cfg.source, cfg.data, seed, args.threads, argv, files)

    print(f"m = {m}; sigma2_hat = {', '.join(f'{v:.4g}' for v in sigma2)}")
    for r in rows:
        print(f"pair ({r['j']},{r['k']}) component {r['component']}: required n = {r['required_n']}"
              f" for noise sd < {target}")
    for t in report.get("transforms", []):
        print(f"pair ({t['j']},{t['k']}): {t['label']} (scales {t['scale_x']:.3g}, {t['scale_y']:.3g};"
              f" angle {t['angle_degrees']:.3g} deg)")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "noise": cmd_noise, "diagnose": cmd_diagnose}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "configs":
        print("\n".join(bundled_configs()))
        return EXIT_OK
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, argv)
    except (ConfigError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
