"""Tail, normality and long-range-dependence diagnostics.

The functional forms (:func:`hill`, :func:`anderson_darling_normal`, ...) do
the work; the estimator classes at the bottom wrap them in the scikit-learn
``fit``/``transform`` protocol so they can sit in pipelines and grid searches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from scipy import special, stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .tabular import write_table

# Stephens' case-3 upper-tail points for the modified statistic A2 * (1 + 4/n - 25/n**2)
AD_CRITICAL = {0.10: 0.656, 0.05: 0.787, 0.01: 1.092}
AD_BANDS = ("p<0.01", "0.01-0.05", "0.05-0.10", ">0.10")


def _as_series(x) -> np.ndarray:
    arr = check_array(np.asarray(x, dtype=float), ensure_2d=False, dtype=float)
    if arr.ndim == 2 and arr.shape[1] != 1:
        raise ValueError(f"expected a single series, got shape {arr.shape}")
    return column_or_1d(arr)


# --- Hill ---------------------------------------------------------------------


@dataclass(frozen=True)
class HillTrace:
    k: np.ndarray
    alpha: np.ndarray
    ci_halfwidth: np.ndarray

    def mean_over(self, k_lo: int, k_hi: int) -> float:
        sel = (self.k >= k_lo) & (self.k <= k_hi)
        if not sel.any():
            raise ValueError(f"no Hill estimates for k in [{k_lo}, {k_hi}]")
        return float(np.nanmean(self.alpha[sel]))

    def write(self, fh: TextIO, **meta) -> None:
        write_table(fh, {"k": self.k, "alpha": self.alpha}, {"kind": "hill", **meta})


def hill(data, k_max: int | None = None) -> HillTrace:
    """Hill estimates ``1 / mean(log X_(i) - log X_(k+1))`` for ``k = 1..k_max``."""
    x = _as_series(data)
    n = x.size
    if n < 3:
        raise ValueError("Hill estimation needs at least 3 observations")
    if np.any(x <= 0):
        raise ValueError("Hill estimation needs positive data")
    k_max = n - 1 if k_max is None else int(k_max)
    if not 1 <= k_max < n:
        raise ValueError(f"k_max must lie in [1, {n - 1}], got {k_max}")
    logs = np.sort(np.log(x))[::-1]
    k = np.arange(1, k_max + 1)
    # sum_{i<k} (log X_(i) - log X_(k)) as a sum of nonnegative spacings: exact zeros at ties
    spacings = logs[:k_max] - logs[1 : k_max + 1]
    excess = np.cumsum(k * spacings) / k
    if np.all(excess <= 0):
        raise ValueError("degenerate sample: no log-excess above any threshold")
    with np.errstate(divide="ignore"):
        alpha = np.where(excess > 0, 1.0 / excess, np.nan)
    return HillTrace(k=k, alpha=alpha, ci_halfwidth=1.96 * alpha / np.sqrt(k))


def hill_estimate(data, k_lo: int, k_hi: int) -> float:
    """Average Hill estimate over ``k_lo <= k <= k_hi`` (the read-off "stable region")."""
    return hill(data, k_hi).mean_over(k_lo, k_hi)


# --- Anderson-Darling -----------------------------------------------------------


@dataclass(frozen=True)
class ADResult:
    statistic: float  # A**2 with estimated mean and variance
    adjusted: float  # A**2 * (1 + 4/n - 25/n**2)
    band: str
    n: int

    def rejects(self, level: float = 0.01) -> bool:
        return self.adjusted >= AD_CRITICAL[level]


def anderson_darling_normal(data) -> ADResult:
    x = np.sort(_as_series(data))
    n = x.size
    if n < 8:
        raise ValueError("Anderson-Darling normality test needs at least 8 observations")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("zero variance sample")
    z = (x - x.mean()) / sd
    i = np.arange(1, n + 1)
    a2 = -n - np.sum((2 * i - 1) * (special.log_ndtr(z) + special.log_ndtr(-z[::-1]))) / n
    adj = a2 * (1.0 + 4.0 / n - 25.0 / n**2)
    if adj >= AD_CRITICAL[0.01]:
        band = AD_BANDS[0]
    elif adj >= AD_CRITICAL[0.05]:
        band = AD_BANDS[1]
    elif adj >= AD_CRITICAL[0.10]:
        band = AD_BANDS[2]
    else:
        band = AD_BANDS[3]
    return ADResult(float(a2), float(adj), band, n)


# --- QQ constructions -----------------------------------------------------------


@dataclass(frozen=True)
class QQSeries:
    theoretical: np.ndarray
    empirical: np.ndarray
    slope: float
    intercept: float
    r: float
    fit_count: int

    def write(self, fh: TextIO, kind: str = "qq", **meta) -> None:
        header = {"kind": kind, "slope": self.slope, "intercept": self.intercept, "r": self.r, "fit_count": self.fit_count}
        write_table(fh, {"theoretical": self.theoretical, "empirical": self.empirical}, {**header, **meta})


def _plotting_positions(n: int) -> np.ndarray:
    return (np.arange(1, n + 1) - 0.5) / n


def _fit_top(theory: np.ndarray, emp: np.ndarray, m: int) -> QQSeries:
    tx, ty = theory[-m:], emp[-m:]
    slope, intercept = np.polyfit(tx, ty, 1)
    r = float(np.corrcoef(tx, ty)[0, 1]) if m > 1 and np.ptp(ty) > 0 else math.nan
    return QQSeries(theory, emp, float(slope), float(intercept), r, m)


def qq_normal(data, fit_fraction: float = 1.0) -> QQSeries:
    """Normal QQ series; the line is fitted over the upper ``fit_fraction`` of points."""
    y = np.sort(_as_series(data))
    n = y.size
    if n < 3:
        raise ValueError("QQ construction needs at least 3 observations")
    if not 0 < fit_fraction <= 1:
        raise ValueError("fit_fraction must lie in (0, 1]")
    theory = stats.norm.ppf(_plotting_positions(n))
    return _fit_top(theory, y, max(2, int(round(fit_fraction * n))))


def qq_exponential_log(data, top_m: int = 55) -> QQSeries:
    """Exponential QQ series of ``log(data)``, line fitted through the ``top_m`` largest."""
    x = _as_series(data)
    n = x.size
    if n < 3:
        raise ValueError("QQ construction needs at least 3 observations")
    if np.any(x <= 0):
        raise ValueError("log QQ construction needs positive data")
    if not 2 <= top_m <= n:
        raise ValueError(f"top_m must lie in [2, {n}], got {top_m}")
    y = np.sort(np.log(x))
    theory = -np.log1p(-_plotting_positions(n))
    return _fit_top(theory, y, top_m)


# --- long-range dependence --------------------------------------------------------


def default_block_sizes(n: int, min_blocks: int = 8) -> np.ndarray:
    sizes = 2 ** np.arange(0, int(math.log2(max(n // min_blocks, 1))) + 1)
    return sizes


def aggregated_variances(increments, block_sizes) -> tuple[np.ndarray, np.ndarray]:
    x = _as_series(increments)
    sizes = np.asarray(sorted({int(b) for b in block_sizes}))
    if sizes.size < 2:
        raise ValueError("need at least two distinct block sizes")
    if sizes[0] < 1 or x.size // sizes[-1] < 2:
        raise ValueError("every block size needs at least two complete blocks")
    out = []
    for m in sizes:
        nb = x.size // m
        means = x[: nb * m].reshape(nb, m).mean(axis=1)
        out.append(means.var(ddof=1))
    var = np.array(out)
    if np.any(var <= 0):
        raise ValueError("degenerate increments: zero variance of block means")
    return sizes, var


def hurst_aggregated_variance(increments, block_sizes=None) -> float:
    """Hurst exponent from ``Var(block mean) ~ m**(2H - 2)``."""
    x = _as_series(increments)
    if block_sizes is None:
        block_sizes = default_block_sizes(x.size)
    sizes, var = aggregated_variances(x, block_sizes)
    slope = np.polyfit(np.log(sizes), np.log(var), 1)[0]
    return float(1.0 + slope / 2.0)


def hurst_variance_time(times, variances) -> float:
    """Hurst exponent from ``Var X(t) ~ t**(2H)`` across marginal times."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(variances, dtype=float)
    keep = t > 0
    if keep.sum() < 2:
        raise ValueError("need variances at two or more positive times")
    if np.any(v[keep] <= 0):
        raise ValueError("nonpositive variance")
    return float(np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0] / 2.0)


# --- trend and seasonality ----------------------------------------------------------


def _design(n: int, period: int | None) -> np.ndarray:
    t = np.arange(n, dtype=float)
    t -= t.mean()
    if period is None:
        return np.column_stack((np.ones(n), t))
    dummies = (np.arange(n)[:, None] % period == np.arange(period)[None, :]).astype(float)
    return np.column_stack((t, dummies))


def _check_period(n: int, period: int | None) -> None:
    if period is None:
        if n < 3:
            raise ValueError("detrending needs at least 3 observations")
        return
    if int(period) != period or period <= 1:
        raise ValueError(f"period must be an integer above 1, got {period}")
    if n < 2 * period:
        raise ValueError(f"series of length {n} is shorter than two periods of {period}")


def detrend_deseasonalize(series, period: int | None) -> np.ndarray:
    """Residuals after a joint least-squares fit of a linear trend and per-phase levels.

    The fit is a projection, so the residuals have zero mean within every
    phase and applying the function again changes nothing.  With
    ``period=None`` only the linear trend is removed.
    """
    y = _as_series(series)
    _check_period(y.size, period)
    X = _design(y.size, period)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return y - X @ coef


# --- scikit-learn style wrappers ----------------------------------------------------


class HillEstimator(BaseEstimator):
    """Hill tail-index estimator.

    Parameters
    ----------
    k_max : int or None
        Largest number of upper order statistics; defaults to ``n - 1``.
    k_range : tuple of int or None
        ``(k_lo, k_hi)`` window averaged into ``alpha_``.  Without it
        ``alpha_`` is the estimate at ``k_max``.

    Attributes
    ----------
    trace_ : HillTrace
    alpha_ : float
    """

    def __init__(self, k_max=None, k_range=None):
        self.k_max = k_max
        self.k_range = k_range

    def fit(self, X, y=None):
        x = _as_series(X)
        k_max = self.k_max
        if self.k_range is not None:
            k_lo, k_hi = self.k_range
            k_max = max(k_hi, k_max or 0)
        self.trace_ = hill(x, k_max)
        if self.k_range is not None:
            self.alpha_ = self.trace_.mean_over(*self.k_range)
        else:
            self.alpha_ = float(self.trace_.alpha[-1])
        self.n_samples_ = x.size
        return self


class AndersonDarlingNormality(BaseEstimator):
    """Anderson-Darling normality test with estimated mean and variance."""

    def fit(self, X, y=None):
        res = anderson_darling_normal(X)
        self.result_ = res
        self.statistic_ = res.statistic
        self.adjusted_statistic_ = res.adjusted
        self.band_ = res.band
        return self

    def rejects(self, level: float = 0.01) -> bool:
        check_is_fitted(self, "result_")
        return self.result_.rejects(level)


class AggregatedVarianceHurst(BaseEstimator):
    """Aggregated-variance Hurst estimator for equally spaced increments."""

    def __init__(self, block_sizes=None):
        self.block_sizes = block_sizes

    def fit(self, X, y=None):
        x = _as_series(X)
        sizes = default_block_sizes(x.size) if self.block_sizes is None else self.block_sizes
        self.block_sizes_, self.variances_ = aggregated_variances(x, sizes)
        slope = np.polyfit(np.log(self.block_sizes_), np.log(self.variances_), 1)[0]
        self.hurst_ = float(1.0 + slope / 2.0)
        return self


class SeasonalDetrender(TransformerMixin, BaseEstimator):
    """Remove a linear trend and per-phase levels learned on the training series.

    ``transform`` subtracts the fitted components at positions ``0..n-1`` of
    its input, so ``fit_transform`` equals :func:`detrend_deseasonalize`.
    """

    def __init__(self, period=None):
        self.period = period

    def fit(self, X, y=None):
        x = _as_series(X)
        _check_period(x.size, self.period)
        self.n_train_ = x.size
        self.coef_, *_ = np.linalg.lstsq(_design(x.size, self.period), x, rcond=None)
        return self

    def transform(self, X):
        check_is_fitted(self, "coef_")
        x = _as_series(X)
        t = np.arange(x.size, dtype=float) - (self.n_train_ - 1) / 2.0
        if self.period is None:
            fitted = self.coef_[0] + self.coef_[1] * t
        else:
            fitted = self.coef_[0] * t + self.coef_[1:][np.arange(x.size) % self.period]
        return x - fitted
