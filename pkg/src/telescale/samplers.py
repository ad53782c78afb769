"""Seedable random-variate generation for sessions, rates and stable laws.

Every sampler takes an explicit :class:`numpy.random.Generator`; nothing
here touches global random state.  Use :func:`substream` to derive the
independent, reproducible generator for one (seed, stream, replication)
triple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "DurationLaw",
    "RateLaw",
    "substream",
    "poisson_arrivals",
    "sample_duration",
    "sample_residual_duration",
    "sample_stable_skewed",
    "stable_unit_scale",
]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``.

    ``key`` is typically ``(horizon_index, stream_index, replication_index)``.
    Two calls with equal arguments return generators producing identical
    streams; different keys give statistically independent streams.
    """
    if seed < 0 or any(k < 0 for k in key):
        raise ValueError("seed and substream keys must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class DurationLaw:
    """Pareto session-duration law with survival ``(x/xm)**-alpha`` on ``x >= xm``."""

    alpha: float
    xm: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 1.0 and math.isfinite(self.alpha)):
            raise ValueError(f"duration tail index must exceed 1, got {self.alpha}")
        if not (self.xm > 0.0 and math.isfinite(self.xm)):
            raise ValueError(f"duration scale must be positive, got {self.xm}")

    @property
    def kind(self) -> str:
        return "pareto"

    @property
    def mean(self) -> float:
        return self.alpha * self.xm / (self.alpha - 1.0)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x >= self.xm, (np.maximum(x, self.xm) / self.xm) ** -self.alpha, 1.0)
        return out if out.ndim else float(out)

    def moment(self, p: float) -> float:
        """``E[D**p]``; infinite for ``p >= alpha``."""
        if p >= self.alpha:
            return math.inf
        return self.alpha * self.xm**p / (self.alpha - p)

    def quantile(self, t):
        """Tail quantile ``b(t) = inf{x : 1/survival(x) >= t}``."""
        t = np.asarray(t, dtype=float)
        out = np.where(t > 1.0, self.xm * np.maximum(t, 1.0) ** (1.0 / self.alpha), 0.0)
        return out if out.ndim else float(out)

    def inverse_survival(self, u):
        """Map uniforms in ``(0, 1]`` to durations: ``xm * u**(-1/alpha)``."""
        u = np.asarray(u, dtype=float)
        out = self.xm * u ** (-1.0 / self.alpha)
        return out if out.ndim else float(out)

    def residual_inverse_cdf(self, v):
        """Inverse CDF of the integrated-tail law with density ``survival(u)/mean``.

        The CDF is ``u/mean`` on ``[0, xm]`` and ``1 - (u/xm)**(1-alpha)/alpha``
        above, so both branches invert in closed form.
        """
        v = np.asarray(v, dtype=float)
        a = self.alpha
        split = (a - 1.0) / a
        with np.errstate(divide="ignore", invalid="ignore"):
            upper = self.xm * (a * (1.0 - v)) ** (-1.0 / (a - 1.0))
        out = np.where(v <= split, v * self.mean, upper)
        return out if out.ndim else float(out)


_RATE_KINDS = ("constant", "lognormal", "pareto")


@dataclass(frozen=True)
class RateLaw:
    """Session transmission-rate law.

    ``constant``: every session transmits at ``value``.
    ``lognormal``: ``exp(N(mu, sigma**2))``.
    ``pareto``: survival ``(r/xm)**-alpha`` with ``1 < alpha < 2``.
    """

    kind: str = "constant"
    value: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    alpha: float = 1.5
    xm: float = 1.0

    def __post_init__(self):
        if self.kind not in _RATE_KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}; expected one of {_RATE_KINDS}")
        if self.kind == "constant" and not self.value > 0:
            raise ValueError("constant rate must be positive")
        if self.kind == "lognormal" and not self.sigma >= 0:
            raise ValueError("lognormal sigma must be nonnegative")
        if self.kind == "pareto":
            if not 1.0 < self.alpha < 2.0:
                raise ValueError(f"pareto rate tail index must lie in (1, 2), got {self.alpha}")
            if not self.xm > 0:
                raise ValueError("pareto rate scale must be positive")

    @classmethod
    def constant(cls, value: float = 1.0) -> "RateLaw":
        return cls(kind="constant", value=value)

    @classmethod
    def lognormal(cls, mu: float = 0.0, sigma: float = 1.0) -> "RateLaw":
        return cls(kind="lognormal", mu=mu, sigma=sigma)

    @classmethod
    def pareto(cls, alpha: float, xm: float = 1.0) -> "RateLaw":
        return cls(kind="pareto", alpha=alpha, xm=xm)

    @property
    def heavy(self) -> bool:
        """True when the rate tail is regularly varying with index in (1, 2)."""
        return self.kind == "pareto"

    @property
    def tail_index(self) -> float:
        return self.alpha if self.kind == "pareto" else math.inf

    @property
    def mean(self) -> float:
        return self.moment(1.0)

    def moment(self, p: float) -> float:
        if self.kind == "constant":
            return self.value**p
        if self.kind == "lognormal":
            return math.exp(p * self.mu + 0.5 * (p * self.sigma) ** 2)
        if p >= self.alpha:
            return math.inf
        return self.alpha * self.xm**p / (self.alpha - p)

    def quantile(self, t):
        """``b_R(t) = inf{r : 1/survival(r) >= t}``; only defined for pareto rates."""
        if self.kind != "pareto":
            raise ValueError("rate tail quantile is only used for pareto rates")
        t = np.asarray(t, dtype=float)
        out = np.where(t > 1.0, self.xm * np.maximum(t, 1.0) ** (1.0 / self.alpha), 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "constant":
            return np.full(size, self.value) if size is not None else self.value
        if self.kind == "lognormal":
            return rng.lognormal(self.mu, self.sigma, size)
        u = 1.0 - rng.random(size)  # (0, 1]
        return self.xm * u ** (-1.0 / self.alpha)


def poisson_arrivals(intensity: float, window, rng: np.random.Generator) -> np.ndarray:
    """Sorted homogeneous Poisson arrival times on ``[lo, hi)``."""
    lo, hi = float(window[0]), float(window[1])
    if not (intensity >= 0 and math.isfinite(intensity)):
        raise ValueError(f"intensity must be finite and nonnegative, got {intensity}")
    if hi < lo:
        raise ValueError(f"inverted window [{lo}, {hi}]")
    n = rng.poisson(intensity * (hi - lo)) if intensity > 0 else 0
    if n == 0:
        return np.empty(0)
    # uniform on [0, 1) keeps every point strictly below hi
    return np.sort(lo + (hi - lo) * rng.random(n))


def sample_duration(law: DurationLaw, rng: np.random.Generator, size=None):
    u = 1.0 - rng.random(size)
    return law.inverse_survival(u)


def sample_residual_duration(law: DurationLaw, rng: np.random.Generator, size=None):
    """Remaining lifetime of a session alive at time 0 under stationarity."""
    return law.residual_inverse_cdf(rng.random(size))


def stable_unit_scale(alpha: float) -> float:
    """Scale (in the usual S(alpha, beta=1, sigma, 0) sense) of the unit skewed law.

    The unit law is the compensated Poisson integral of jumps with Levy
    measure ``alpha * x**(-alpha-1) dx`` on ``x > 0``; its upper tail is
    asymptotically ``x**-alpha`` and its mean is zero.
    """
    return (special.gamma(2.0 - alpha) * -math.cos(math.pi * alpha / 2.0) / (alpha - 1.0)) ** (1.0 / alpha)


def _check_stable_alpha(alpha: float) -> None:
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"stable index must lie in (1, 2), got {alpha}")


def sample_stable_skewed(alpha: float, scale: float, rng: np.random.Generator, size=None):
    """Totally right-skewed alpha-stable draws, ``scale`` times the unit law.

    Uses the Chambers-Mallows-Stuck transform of a uniform angle and a unit
    exponential (beta = 1, alpha != 1 branch).
    """
    _check_stable_alpha(alpha)
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if scale == 0:
        return np.zeros(size) if size is not None else 0.0
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    w = rng.exponential(1.0, size)
    tan_term = math.tan(math.pi * alpha / 2.0)
    b = math.atan(tan_term) / alpha
    s = (1.0 + tan_term**2) ** (1.0 / (2.0 * alpha))
    x = (
        s
        * np.sin(alpha * (v + b))
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos(v - alpha * (v + b)) / w) ** ((1.0 - alpha) / alpha)
    )
    return scale * stable_unit_scale(alpha) * x
