"""Growth-regime classification and limit-law prediction for stream ensembles.

For Pareto durations and power-law intensities ``lambda(T) = k T**theta`` the
quantity ``lambda(T) * T * survival(T)`` equals ``k xm**alpha T**(1+theta-alpha)``,
so each stream is classified exactly from the sign of ``1 + theta - alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .samplers import DurationLaw, RateLaw
from .tabular import fmt
from .traffic import StreamSpec

EXPONENT_TOL = 1e-12
QUANTILE_RTOL = 1e-12
PROBE_LADDER = np.logspace(2, 12, 21)


@dataclass(frozen=True)
class GrowthClass:
    kind: str  # "fast" | "moderate" | "slow"
    exponent: float | None = None
    c: float | None = None
    heuristic: bool = False

    def __post_init__(self):
        if self.kind not in ("fast", "moderate", "slow"):
            raise ValueError(f"unknown growth class {self.kind!r}")
        if self.kind == "moderate" and not (self.c is not None and self.c > 0):
            raise ValueError("moderate growth needs a positive constant c")


def classify_stream(spec: StreamSpec) -> GrowthClass:
    """Fast, moderate or slow growth of ``lambda(T) T survival(T)``."""
    law = spec.duration
    alpha = law.alpha
    if spec.intensity.is_power_law:
        k, theta = spec.intensity.coefficient, spec.intensity.exponent
        if k == 0:
            return GrowthClass("slow", exponent=-math.inf)
        exponent = 1.0 + theta - alpha
        if abs(exponent) <= EXPONENT_TOL:
            return GrowthClass("moderate", exponent=0.0, c=(k * law.xm**alpha) ** (1.0 / (alpha - 1.0)))
        return GrowthClass("fast" if exponent > 0 else "slow", exponent=exponent)
    return _probe_growth(spec)


def _probe_growth(spec: StreamSpec) -> GrowthClass:
    # log-log slope of lambda T survival(T) over the last decades of the ladder
    T = PROBE_LADDER
    vals = np.array([spec.intensity(t) * t * spec.duration.survival(t) for t in T])
    if np.all(vals[-5:] == 0):
        return GrowthClass("slow", exponent=-math.inf, heuristic=True)
    if np.any(vals[-5:] <= 0):
        raise ValueError(f"intensity of {spec.name or 'stream'} is not positive on the probe ladder")
    slope = np.polyfit(np.log(T[-5:]), np.log(vals[-5:]), 1)[0]
    if slope > 0.05:
        return GrowthClass("fast", exponent=float(slope), heuristic=True)
    if slope < -0.05:
        return GrowthClass("slow", exponent=float(slope), heuristic=True)
    c = float(vals[-1]) ** (1.0 / (spec.alpha - 1.0))
    return GrowthClass("moderate", exponent=float(slope), c=c, heuristic=True)


@dataclass(frozen=True)
class MixtureModel:
    """Duration law of the superposed stream at one time scale.

    Weights are ``lambda_j(T) / lambda(T)``; the survival function is the
    weighted sum of the per-stream survival functions.
    """

    laws: tuple[DurationLaw, ...]
    weights: np.ndarray

    @property
    def alpha(self) -> float:
        return min(law.alpha for law in self.laws)

    @property
    def mean(self) -> float:
        return float(sum(w * law.mean for w, law in zip(self.weights, self.laws)))

    def survival(self, x):
        return sum(w * law.survival(x) for w, law in zip(self.weights, self.laws))

    def quantile(self, y: float) -> float:
        """``b_D(y) = inf{x : 1/survival(x) >= y}`` by bisection."""
        y = float(y)
        if y <= 1.0:
            return 0.0
        if len(set(self.laws)) == 1:
            return float(self.laws[0].quantile(y))
        lo = 0.0
        hi = max(float(law.quantile(y)) for law in self.laws)
        while hi - lo > QUANTILE_RTOL * hi:
            mid = 0.5 * (lo + hi)
            if self.survival(mid) <= 1.0 / y:
                hi = mid
            else:
                lo = mid
        return hi


def mixture(specs: Sequence[StreamSpec], T: float) -> MixtureModel:
    if not specs:
        raise ValueError("mixture needs at least one stream")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    lams = np.array([s.intensity(T) for s in specs], dtype=float)
    total = lams.sum()
    if not total > 0:
        raise ValueError(f"total intensity at T={T} is zero")
    keep = lams > 0
    laws = tuple(s.duration for s, k in zip(specs, keep) if k)
    return MixtureModel(laws=laws, weights=lams[keep] / total)


# --- limit laws ---------------------------------------------------------------


@dataclass(frozen=True)
class FBM:
    """``sqrt(rate_second_moment * sigma2) * B_H``."""

    hurst: float
    sigma2: float
    rate_second_moment: float
    name: str = field(default="FBM", init=False)
    gaussian = True

    @classmethod
    def from_alpha(cls, alpha: float, rate_second_moment: float = 1.0) -> "FBM":
        return cls(
            hurst=(3.0 - alpha) / 2.0,
            sigma2=2.0 / ((alpha - 1.0) * (2.0 - alpha) * (3.0 - alpha)),
            rate_second_moment=rate_second_moment,
        )

    @property
    def tail_index(self):
        return None

    def variance(self, t: float = 1.0) -> float:
        return self.rate_second_moment * self.sigma2 * t ** (2.0 * self.hurst)

    def params(self) -> dict:
        return {"hurst": self.hurst, "sigma2": self.sigma2, "rate_second_moment": self.rate_second_moment}


@dataclass(frozen=True)
class StableSSSI:
    """alpha_R-stable, H-self-similar process with stationary increments."""

    alpha_R: float
    hurst: float
    alpha_D: float
    name: str = field(default="StableSSSI", init=False)
    gaussian = False

    @property
    def tail_index(self):
        return self.alpha_R

    def params(self) -> dict:
        return {"alpha_R": self.alpha_R, "hurst": self.hurst, "alpha_D": self.alpha_D}


@dataclass(frozen=True)
class ModerateY:
    """``c * Y(t / c)`` for the compensated Poisson-integral process Y."""

    c: float
    alpha_D: float
    rate: RateLaw
    name: str = field(default="ModerateY", init=False)
    gaussian = False

    @property
    def tail_index(self):
        return None

    def params(self) -> dict:
        out = {"c": self.c, "alpha_D": self.alpha_D, "rate.kind": self.rate.kind}
        if self.rate.kind == "constant":
            out["rate.value"] = self.rate.value
        elif self.rate.kind == "lognormal":
            out.update({"rate.mu": self.rate.mu, "rate.sigma": self.rate.sigma})
        else:
            out.update({"rate.alpha": self.rate.alpha, "rate.xm": self.rate.xm})
        return out


@dataclass(frozen=True)
class StableLevy:
    """``scale * Lambda_alpha`` with Lambda the unit totally skewed Levy motion."""

    alpha: float
    scale: float
    name: str = field(default="StableLevy", init=False)
    gaussian = False

    @property
    def tail_index(self):
        return self.alpha

    def params(self) -> dict:
        return {"alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class RateStable:
    """alpha_R-stable Levy motion driven by heavy rates (alpha_R below every duration index)."""

    alpha_R: float
    weights: tuple[float, ...]
    duration_scales: tuple[float, ...]  # E[D_j**alpha_R]**(1/alpha_R)
    scale: float
    name: str = field(default="RateStable", init=False)
    gaussian = False

    @property
    def tail_index(self):
        return self.alpha_R

    def params(self) -> dict:
        out = {"alpha_R": self.alpha_R, "scale": self.scale}
        for j, (w, d) in enumerate(zip(self.weights, self.duration_scales)):
            out[f"weight.{j}"] = w
            out[f"duration_scale.{j}"] = d
        return out


@dataclass(frozen=True)
class NoPrediction:
    reason: str
    name: str = field(default="none", init=False)
    gaussian = False

    @property
    def tail_index(self):
        return None

    def params(self) -> dict:
        return {"reason": self.reason}


LimitLaw = FBM | StableSSSI | ModerateY | StableLevy | RateStable | NoPrediction


# --- ensemble report ----------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    specs: tuple[StreamSpec, ...]
    classes: tuple[GrowthClass, ...]
    scenario: str  # "F" | "M" | "S" | "RateDominant" | "Boundary"
    alpha_D: float
    limit: LimitLaw
    c: float | None = None
    tail_condition: str = "satisfied"  # heaviest-tailed streams keep a nonvanishing intensity share
    constant_proportions: bool = True
    heuristic: bool = False

    @property
    def predicts(self) -> bool:
        return self.scenario != "Boundary"

    @property
    def supported(self) -> bool:
        return self.predicts and self.tail_condition == "satisfied"

    def a_T(self, T: float) -> float:
        return normalization(self.specs, self.scenario, T)

    def slope(self, T: float) -> float:
        return float(sum(s.mean_load_slope(T) for s in self.specs))

    def to_text(self) -> str:
        lines = [("schema", "telescale.regime/1"), ("streams", len(self.specs))]
        for j, (spec, cls) in enumerate(zip(self.specs, self.classes)):
            p = f"stream.{j}"
            lines += [
                (f"{p}.name", spec.name or f"s{j}"),
                (f"{p}.alpha_D", spec.alpha),
                (f"{p}.growth", cls.kind),
                (f"{p}.exponent", cls.exponent),
                (f"{p}.c", cls.c),
                (f"{p}.heuristic", cls.heuristic),
            ]
        lines += [
            ("scenario", self.scenario),
            ("alpha_D", self.alpha_D),
            ("c", self.c),
            ("tail_condition", self.tail_condition),
            ("constant_proportions", self.constant_proportions),
            ("heuristic", self.heuristic),
            ("prediction", "available" if self.predicts else "none"),
            ("limit", self.limit.name),
        ]
        lines += [(f"limit.{k}", v) for k, v in self.limit.params().items()]
        return "".join(f"{k}: {'-' if v is None else fmt(v)}\n" for k, v in lines)


def _common_rate(specs: Sequence[StreamSpec]) -> RateLaw:
    rate = specs[0].rate
    if any(s.rate != rate for s in specs[1:]):
        raise ValueError("all streams must share one rate law")
    return rate


def _limit_weights(specs: Sequence[StreamSpec]) -> tuple[np.ndarray, bool]:
    """``lim lambda_j(T)/lambda(T)`` and whether it was obtained analytically."""
    if all(s.intensity.is_power_law for s in specs):
        k = np.array([s.intensity.coefficient for s in specs])
        theta = np.array([s.intensity.exponent for s in specs])
        live = k > 0
        top = theta[live].max()
        w = np.where(live & (theta == top), k, 0.0)
        return w / w.sum(), True
    lam = np.array([s.intensity(PROBE_LADDER[-1]) for s in specs])
    return lam / lam.sum(), False


def _tail_condition(specs: Sequence[StreamSpec], alpha_D: float) -> tuple[bool, bool]:
    """Whether streams with the heaviest duration tail keep a positive share of the intensity, and whether that was probed numerically."""
    heavy = np.array([abs(s.alpha - alpha_D) <= EXPONENT_TOL for s in specs])
    if all(s.intensity.is_power_law for s in specs):
        w, _ = _limit_weights(specs)
        return bool(w[heavy].max() > 0), False
    lam = np.array([[s.intensity(t) for s in specs] for t in PROBE_LADDER[-5:]])
    heavy_share = (lam[:, heavy] / lam.sum(axis=1, keepdims=True)).max(axis=1)
    return bool(heavy_share.min() > 1e-3), True


def _constant_proportions(specs: Sequence[StreamSpec]) -> bool:
    if all(s.intensity.is_power_law for s in specs):
        thetas = {s.intensity.exponent for s in specs if s.intensity.coefficient > 0}
        return len(thetas) <= 1
    lam = np.array([[s.intensity(t) for s in specs] for t in PROBE_LADDER])
    w = lam / lam.sum(axis=1, keepdims=True)
    return bool(np.allclose(w, w[0], rtol=1e-9, atol=0))


def scenario(specs: Sequence[StreamSpec]) -> RegimeReport:
    """Scenario F/M/S (or the rate-dominated cases) and the predicted limit law."""
    specs = tuple(specs)
    if not specs:
        raise ValueError("scenario needs at least one stream")
    for s in specs:
        if not 1.0 < s.alpha < 2.0:
            raise ValueError(f"duration tail index must lie in (1, 2) for regime analysis, got {s.alpha}")
    if not any(s.intensity(PROBE_LADDER[0]) > 0 for s in specs):
        raise ValueError("every stream has zero intensity")
    rate = _common_rate(specs)
    classes = tuple(classify_stream(s) for s in specs)
    alpha_D = min(s.alpha for s in specs)
    ok, probe2 = _tail_condition(specs, alpha_D)
    common = dict(
        specs=specs,
        classes=classes,
        alpha_D=alpha_D,
        tail_condition="satisfied" if ok else "violated",
        constant_proportions=_constant_proportions(specs),
        heuristic=probe2 or any(c.heuristic for c in classes),
    )

    if rate.heavy and abs(rate.alpha - alpha_D) <= EXPONENT_TOL:
        return RegimeReport(scenario="Boundary", limit=NoPrediction("alpha_R equals alpha_D"), **common)
    if rate.heavy and rate.alpha < alpha_D:
        w, _ = _limit_weights(specs)
        moments = [s.duration.moment(rate.alpha) for s in specs]
        scales = tuple(m ** (1.0 / rate.alpha) for m in moments)
        scale = float(np.dot(w, moments)) ** (1.0 / rate.alpha)
        limit = RateStable(rate.alpha, tuple(float(x) for x in w), scales, scale)
        # limiting proportions exist for power-law intensities; the tail condition is moot
        return RegimeReport(scenario="RateDominant", limit=limit, **{**common, "tail_condition": "satisfied"})

    kinds = {c.kind for c in classes}
    if "fast" in kinds:
        if rate.heavy:
            limit = StableSSSI(rate.alpha, (rate.alpha + 1.0 - alpha_D) / rate.alpha, alpha_D)
        else:
            limit = FBM.from_alpha(alpha_D, rate.moment(2.0))
        return RegimeReport(scenario="F", limit=limit, **common)
    if "moderate" in kinds:
        total = sum(cl.c ** (s.alpha - 1.0) for s, cl in zip(specs, classes) if cl.kind == "moderate")
        c = total ** (1.0 / (alpha_D - 1.0))
        return RegimeReport(scenario="M", limit=ModerateY(c, alpha_D, rate), c=c, **common)
    scale = rate.moment(alpha_D) ** (1.0 / alpha_D)
    return RegimeReport(scenario="S", limit=StableLevy(alpha_D, scale), **common)


def normalization(specs: Sequence[StreamSpec], scenario: str, T: float) -> float:
    """Normalizing constant ``a(T)`` for the centered cumulative input."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if scenario == "Boundary":
        raise ValueError("no normalization is predicted for the boundary case alpha_R == alpha_D")
    specs = tuple(specs)
    rate = _common_rate(specs)
    lam = sum(s.intensity(T) for s in specs)
    if scenario == "M":
        return float(T)
    if scenario == "RateDominant":
        return float(rate.quantile(lam * T))
    mix = mixture(specs, T)
    if scenario == "F":
        if rate.heavy:
            return float(T * rate.quantile(lam * T * mix.survival(T)))
        return math.sqrt(lam * T**3 * mix.survival(T))
    if scenario == "S":
        return mix.quantile(lam * T)
    raise ValueError(f"unknown scenario {scenario!r}")
