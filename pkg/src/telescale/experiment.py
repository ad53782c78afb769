"""Replication orchestration for simulate and verify.

Replication ``r`` of horizon ``T[i]`` draws stream ``j`` from
``substream(seed, i, j, r)``, so results do not depend on worker count or
scheduling.  Output layout under the run directory::

    regime.txt
    marginals_T{i}.tsv               one row per replication, one column per grid time
    paths/T{i}/rep{r:06d}.tsv        one LoadPath per replication
    verdict.tsv                      written by verify
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .estimators import anderson_darling_normal, hill, hurst_aggregated_variance, hurst_variance_time
from .reference import moderate_y_path, stable_sssi_marginal
from .regime import FBM, ModerateY, NoPrediction, RegimeReport, StableSSSI, scenario
from .samplers import substream
from .tabular import fmt, read_table, write_table
from .traffic import LoadPath, SessionBudgetError, center_scale, expected_sessions, simulate_stream, superpose

THREADS_ENV = "TELESCALE_THREADS"
REFERENCE_KEY = 2**32 - 1  # substream key reserved for reference draws in verify
HURST_MIN_POINTS = 64


class MissingInputError(FileNotFoundError):
    pass


def resolve_threads(cli_value: int | None = None, config_value: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None and env.strip():
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
    elif cli_value is not None:
        n = cli_value
    elif config_value is not None:
        n = config_value
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ValueError(f"thread count must be positive, got {n}")
    return n


def regime_for(config: ExperimentConfig) -> RegimeReport | None:
    """Regime report, or ``None`` when every stream is silent."""
    if not any(s.intensity(T) > 0 for s in config.streams for T in config.T):
        return None
    return scenario(config.streams)


def _stream_label(spec, j: int) -> str:
    return spec.name or f"stream {j}"


def simulate_replication(config: ExperimentConfig, t_index: int, rep: int, report: RegimeReport | None = None) -> LoadPath:
    T = config.T[t_index]
    paths = []
    for j, spec in enumerate(config.streams):
        rng = substream(config.seed, t_index, j, rep)
        try:
            paths.append(simulate_stream(spec, T, config.grid, rng, config.session_cap)[1])
        except SessionBudgetError as exc:
            raise SessionBudgetError(f"stream index {j}: {exc}") from None
    total = superpose(paths)
    if report is None:
        report = regime_for(config)
    if report is None or not report.predicts:
        # no normalization available: keep the raw path, centered by the mean slope only
        return center_scale(total, 1.0, total.slope)
    return center_scale(total, report.a_T(T), report.slope(T))


def _work(args):
    config, t_index, reps = args
    report = regime_for(config)
    return [simulate_replication(config, t_index, r, report) for r in reps]


def _check_budget(config: ExperimentConfig) -> None:
    for T in config.T:
        for j, spec in enumerate(config.streams):
            n = expected_sessions(spec, T, config.grid[-1])
            if n > config.session_cap:
                raise SessionBudgetError(
                    f"stream {_stream_label(spec, j)!r}, T={fmt(T)}: expects {n:.3g} sessions, above the cap of {config.session_cap:.3g}"
                )


def _chunks(n: int, parts: int) -> list[range]:
    size = max(1, math.ceil(n / parts))
    return [range(lo, min(n, lo + size)) for lo in range(0, n, size)]


def marginal_columns(grid: np.ndarray) -> list[str]:
    return [fmt(t) for t in grid]


def run_simulation(config: ExperimentConfig, out: Path, threads: int = 1, write_paths: bool = True) -> list[np.ndarray]:
    """Simulate every (T, replication) and write the output tree; returns marginals per T."""
    out = Path(out)
    _check_budget(config)
    report = regime_for(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "regime.txt").write_text(report.to_text() if report is not None else "schema: telescale.regime/1\nprediction: none\nreason: all streams silent\n")
    results = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for i, T in enumerate(config.T):
            chunks = _chunks(config.replications, 4 * threads) if pool else [range(config.replications)]
            jobs = [(config, i, c) for c in chunks]
            batches = pool.map(_work, jobs) if pool else map(_work, jobs)
            paths = [p for batch in batches for p in batch]
            if write_paths:
                pdir = out / "paths" / f"T{i}"
                pdir.mkdir(parents=True, exist_ok=True)
                for r, path in enumerate(paths):
                    with open(pdir / f"rep{r:06d}.tsv", "w") as fh:
                        path.write(fh)
            marg = np.array([p.centered_scaled for p in paths])
            cols = {"rep": np.arange(config.replications)}
            cols.update(zip(marginal_columns(config.grid), marg.T))
            meta = {"kind": "marginals", "T": T, "a_T": paths[0].a_T, "slope": paths[0].slope}
            if report is not None:
                meta.update(scenario=report.scenario, limit=report.limit.name)
            with open(out / f"marginals_T{i}.tsv", "w") as fh:
                write_table(fh, cols, meta)
            results.append(marg)
    finally:
        if pool:
            pool.shutdown()
    return results


def read_marginals(path: Path) -> tuple[dict, np.ndarray, np.ndarray]:
    """``(meta, grid, values)`` with ``values[rep, k]`` the marginal at ``grid[k]``."""
    if not Path(path).exists():
        raise MissingInputError(f"missing simulate output {path}; run simulate first")
    with open(path) as fh:
        meta, cols = read_table(fh)
    names = [c for c in cols if c != "rep"]
    grid = np.array([float(c) for c in names])
    values = np.column_stack([cols[c] for c in names]) if names else np.zeros((0, 0))
    return meta, grid, values


# --- verification -------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    T: float
    check: str
    t: float
    observed: float
    expected: str
    tolerance: str
    passed: bool
    note: str = "-"


def _txt(v: float) -> str:
    # shortest round-trip text for thresholds quoted in the verdict table
    return repr(float(v))


def default_hill_range(n_positive: int) -> tuple[int, int]:
    return max(2, n_positive // 40), max(3, n_positive // 10)


def _is_uniform(grid: np.ndarray) -> bool:
    steps = np.diff(np.r_[0.0, grid])
    return bool(np.allclose(steps, steps[0], rtol=1e-9, atol=0))


def _hill_check(T, t, x, law, analysis) -> Check:
    pos = x[x > 0]
    k_lo, k_hi = analysis.hill_k or default_hill_range(pos.size)
    target = law.tail_index
    expected, tol = _txt(target), _txt(analysis.hill_tolerance)
    if pos.size <= k_hi or np.ptp(pos) == 0:
        return Check(T, "hill_tail", t, math.nan, expected, tol, False, f"only {pos.size} positive values for k_hi={k_hi}")
    est = hill(pos, k_hi).mean_over(k_lo, k_hi)
    return Check(T, "hill_tail", t, est, expected, tol, bool(abs(est - target) <= analysis.hill_tolerance), f"k={k_lo}..{k_hi}")


def _ad_check(T, t, x, gaussian: bool) -> Check:
    if x.size < 8 or not x.std() > 0:
        return Check(T, "ad_normal" if gaussian else "ad_reject", t, math.nan, "-", "-", False, "too few or constant values")
    res = anderson_darling_normal(x)
    if gaussian:
        return Check(T, "ad_normal", t, res.adjusted, "band != p<0.01", "1%", not res.rejects(0.01), res.band)
    return Check(T, "ad_reject", t, res.adjusted, "band == p<0.01", "1%", res.rejects(0.01), res.band)


def _hurst_check(T, grid, values, law: FBM, analysis) -> Check | None:
    tol = _txt(analysis.hurst_tolerance)
    if grid.size >= HURST_MIN_POINTS and _is_uniform(grid):
        inc = np.diff(np.column_stack([np.zeros(values.shape[0]), values]), axis=1)
        blocks = analysis.hurst_blocks
        est = float(np.mean([hurst_aggregated_variance(row, blocks) for row in inc]))
        note = "aggregated variance" + (f", blocks {min(blocks)}..{max(blocks)}" if blocks else "")
    elif grid.size >= 2 and values.shape[0] >= 3:
        est = hurst_variance_time(grid, values.var(axis=0, ddof=1))
        note = "variance-time"
    else:
        return None
    return Check(T, "hurst", float(grid[-1]), est, _txt(law.hurst), tol, bool(abs(est - law.hurst) <= analysis.hurst_tolerance), note)


def _central_qq_corr(x, ref) -> float:
    q = np.linspace(0.05, 0.95, 181)
    return float(np.corrcoef(np.quantile(x, q), np.quantile(ref, q))[0, 1])


def verify_horizon(config: ExperimentConfig, report: RegimeReport, t_index: int, grid: np.ndarray, values: np.ndarray) -> list[Check]:
    a = config.analysis
    T = config.T[t_index]
    law = report.limit
    t = float(grid[-1])
    x = values[:, -1]
    rows = []
    if isinstance(law, FBM):
        if a.normality:
            rows.append(_ad_check(T, t, x, True))
            var = float(x.var(ddof=1)) if x.size > 1 else math.nan
            target = law.variance(t)
            ok = bool(abs(var - target) <= a.variance_rtol * target)
            rows.append(Check(T, "variance", t, var, _txt(target), f"{_txt(a.variance_rtol)} rel", ok))
        if a.hurst:
            h = _hurst_check(T, grid, values, law, a)
            if h is not None:
                rows.append(h)
        return rows
    if isinstance(law, ModerateY):
        if a.tail:
            rng = substream(config.seed, REFERENCE_KEY, t_index)
            ref = moderate_y_path(law.c, law.alpha_D, law.rate, [0.0, t], 0.02 * t, rng, a.reference_size).values[:, -1]
            p = float(stats.ks_2samp(x, ref).pvalue)
            rows.append(Check(T, "reference_ks", t, p, "p > 0.01", "1%", p > 0.01, "two-sample KS against the truncated limit"))
        return rows
    if a.normality:
        rows.append(_ad_check(T, t, x, False))
    if a.tail:
        rows.append(_hill_check(T, t, x, law, a))
        if isinstance(law, StableSSSI):
            rng = substream(config.seed, REFERENCE_KEY, t_index)
            ref = stable_sssi_marginal(law.alpha_R, law.hurst, t, a.reference_size, rng)
            r = _central_qq_corr(x, ref)
            rows.append(Check(T, "reference_qq", t, r, f">= {_txt(a.qq_min_corr)}", "-", r >= a.qq_min_corr, "central 90% of quantiles"))
    return rows


def run_verify(config: ExperimentConfig, out: Path) -> tuple[list[Check], RegimeReport | None]:
    """Checks for every horizon; a pure function of the config and the marginals files."""
    out = Path(out)
    report = regime_for(config)
    inputs = [read_marginals(out / f"marginals_T{i}.tsv") for i in range(len(config.T))]
    rows: list[Check] = []
    if report is None or isinstance(report.limit, NoPrediction) or not config.analysis.any:
        return rows, report
    for i, (_, grid, values) in enumerate(inputs):
        rows += verify_horizon(config, report, i, grid, values)
    return rows, report


def write_verdicts(fh, rows: Sequence[Check], report: RegimeReport | None) -> None:
    names = ("T", "check", "t", "observed", "expected", "tolerance", "verdict", "note")
    cols = {n: [] for n in names}
    for c in rows:
        for n, v in zip(names, (c.T, c.check, c.t, c.observed, c.expected, c.tolerance, "PASS" if c.passed else "FAIL", c.note)):
            cols[n].append(v)
    meta = {"kind": "verdict", "limit": report.limit.name if report else "none"}
    write_table(fh, cols, meta)
