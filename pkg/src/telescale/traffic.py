"""M/G/infinity session ensembles and cumulative-load paths.

A stream generates sessions ``(s, u, r)``: start, duration and rate.  The
cumulative input over ``[0, t]`` is ``sum(r * occupancy(t, s, u))``.  Paths
are evaluated at the rescaled grid ``T * t_k`` only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence, TextIO

import numpy as np

from .samplers import DurationLaw, RateLaw, sample_duration, sample_residual_duration
from .tabular import fmt, write_table

DEFAULT_SESSION_CAP = 1e8


class SessionBudgetError(RuntimeError):
    """Expected session count of an experiment exceeds the configured cap."""


@dataclass(frozen=True)
class Intensity:
    """Arrival intensity as a function of the time scale: ``coefficient * T**exponent``.

    A plain callable may be supplied through :meth:`custom`; such laws can
    be simulated but only classified heuristically.
    """

    coefficient: float
    exponent: float = 0.0
    func: Callable[[float], float] | None = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.func is None:
            if not (self.coefficient >= 0 and math.isfinite(self.coefficient)):
                raise ValueError("intensity coefficient must be finite and nonnegative")
            if not self.exponent >= 0:
                raise ValueError("intensity exponent must be nonnegative")

    @classmethod
    def power(cls, coefficient: float, exponent: float) -> "Intensity":
        return cls(coefficient, exponent)

    @classmethod
    def constant(cls, value: float) -> "Intensity":
        return cls(value, 0.0)

    @classmethod
    def custom(cls, func: Callable[[float], float], label: str = "custom") -> "Intensity":
        return cls(math.nan, math.nan, func=func, label=label)

    @property
    def is_power_law(self) -> bool:
        return self.func is None

    def __call__(self, T: float) -> float:
        if self.func is not None:
            return float(self.func(T))
        return self.coefficient * T**self.exponent


@dataclass(frozen=True)
class StreamSpec:
    duration: DurationLaw
    rate: RateLaw
    intensity: Intensity
    name: str = ""

    @property
    def alpha(self) -> float:
        return self.duration.alpha

    @property
    def mean_duration(self) -> float:
        return self.duration.mean

    @property
    def mean_rate(self) -> float:
        return self.rate.mean

    def mean_load_slope(self, T: float) -> float:
        """Centering slope ``lambda(T) * mu_D * mu_R * T`` in rescaled time."""
        return self.intensity(T) * self.mean_duration * self.mean_rate * T


class SessionRecord(NamedTuple):
    s: float
    u: float
    r: float


@dataclass(frozen=True)
class Sessions:
    """Struct-of-arrays session ensemble; iterating yields :class:`SessionRecord`."""

    s: np.ndarray
    u: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        if not (len(self.s) == len(self.u) == len(self.r)):
            raise ValueError("session arrays must have equal length")

    @classmethod
    def from_records(cls, records: Sequence[SessionRecord | tuple]) -> "Sessions":
        arr = np.asarray(records, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())

    @classmethod
    def concat(cls, parts: Sequence["Sessions"]) -> "Sessions":
        if not parts:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in "sur"))

    def __len__(self) -> int:
        return len(self.s)

    def __iter__(self) -> Iterator[SessionRecord]:
        for s, u, r in zip(self.s, self.u, self.r):
            yield SessionRecord(float(s), float(u), float(r))

    def scaled(self, time_factor: float) -> "Sessions":
        """Same sessions with start and duration measured in units of ``1/time_factor``."""
        return Sessions(self.s * time_factor, self.u * time_factor, self.r)


@dataclass(frozen=True)
class LoadPath:
    """Cumulative input on the grid ``t_0 = 0 < ... < t_m`` (rescaled by ``T``).

    ``raw[k] = A(T * grid[k])``.  When ``a_T`` and ``slope`` are set,
    ``centered_scaled[k] = (raw[k] - slope * grid[k]) / a_T``.
    """

    grid: np.ndarray
    raw: np.ndarray
    T: float
    slope: float | None = None
    a_T: float | None = None
    centered_scaled: np.ndarray | None = None

    def __post_init__(self):
        for name in ("grid", "raw", "centered_scaled"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        if self.grid.shape != self.raw.shape:
            raise ValueError("grid and raw must have equal shape")

    def reconstruct_raw(self) -> np.ndarray:
        if self.centered_scaled is None:
            return np.array(self.raw)
        return self.centered_scaled * self.a_T + self.slope * self.grid

    def write(self, fh: TextIO) -> None:
        cols = {"t": self.grid, "raw": self.raw}
        if self.centered_scaled is not None:
            cols["centered_scaled"] = self.centered_scaled
        meta = {"kind": "load_path", "T": self.T}
        if self.a_T is not None:
            meta.update(a_T=self.a_T, slope=self.slope)
        write_table(fh, cols, meta)


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if not np.all(np.isfinite(grid)) or grid[0] < 0:
        raise ValueError("grid times must be finite and nonnegative")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def occupancy(t, s, u):
    """Length of ``[0, t] ∩ [s, s + u]``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(t < 0) or np.any(u < 0):
        raise ValueError("occupancy requires t >= 0 and u >= 0")
    out = np.maximum(0.0, np.minimum(t, s + u) - np.maximum(0.0, s))
    # (s + u) - s can round above u; clamp so the bound min(t, u) holds exactly
    out = np.minimum(out, np.minimum(t, u))
    return out if out.ndim else float(out)


def occupancy_kernel_integral(gamma: float, t1: float, t2: float) -> float:
    """``int int L_{t1}(s - u, u) 1[0 <= s <= t2] u**(-gamma) du ds`` in closed form, ``1 < gamma < 2``."""
    if not 1.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie in (1, 2), got {gamma}")
    if t1 < 0 or t2 < 0:
        raise ValueError("t1 and t2 must be nonnegative")
    p = 3.0 - gamma
    body = t2**p - (t2 - t1) ** p if t1 < t2 else t2**p
    return body / ((gamma - 1.0) * (2.0 - gamma) * p)


_DIRECT_LIMIT = 2**25


def cumulative_load(sessions: Sessions, times) -> np.ndarray:
    """``A(tau) = sum r * occupancy(tau, s, u)`` for each absolute time ``tau``."""
    times = np.asarray(times, dtype=float)
    n = len(sessions)
    if n == 0:
        return np.zeros_like(times)
    if n * times.size <= _DIRECT_LIMIT:
        return np.array([np.dot(sessions.r, occupancy(tau, sessions.s, sessions.u)) for tau in times])
    # A(tau) = F(tau; e') - F(tau; s') with F(tau; x) = sum r * min(tau, x),
    # s' = max(s, 0), e' = max(s + u, 0); both terms via sorted prefix sums.
    start = np.maximum(sessions.s, 0.0)
    end = np.maximum(sessions.s + sessions.u, 0.0)
    load = _sum_r_min(times, end, sessions.r) - _sum_r_min(times, start, sessions.r)
    # rounding in the difference can leave ~1e-16 relative negative increments
    steps = np.diff(load, prepend=0.0)
    return np.cumsum(np.maximum(steps, 0.0)) if times[0] == 0 else np.maximum.accumulate(load)


def _sum_r_min(times: np.ndarray, x: np.ndarray, r: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs, rs = x[order], r[order]
    below = np.concatenate(([0.0], np.cumsum(rs * xs)))
    rate_above = np.concatenate((np.cumsum(rs[::-1])[::-1], [0.0]))
    idx = np.searchsorted(xs, times, side="left")
    return below[idx] + times * rate_above[idx]


def expected_sessions(spec: StreamSpec, T: float, t_max: float) -> float:
    return spec.intensity(T) * (spec.mean_duration + t_max * T)


def generate_sessions(spec: StreamSpec, T: float, t_max: float, rng: np.random.Generator) -> Sessions:
    """Stationary session ensemble observed on ``[0, T * t_max]``.

    Sessions alive at time 0 are drawn as a Poisson(lambda * mu_D) batch with
    residual durations and stored left-censored at ``s = 0``; fresh arrivals
    follow on ``[0, T * t_max)``.
    """
    lam = spec.intensity(T)
    if not (lam >= 0 and math.isfinite(lam)):
        raise ValueError(f"intensity at T={T} must be finite and nonnegative, got {lam}")
    if lam == 0:
        return Sessions(np.empty(0), np.empty(0), np.empty(0))
    horizon = T * t_max
    n_alive = rng.poisson(lam * spec.mean_duration)
    n_new = rng.poisson(lam * horizon)
    u_alive = sample_residual_duration(spec.duration, rng, n_alive)
    s_new = horizon * rng.random(n_new)
    u_new = sample_duration(spec.duration, rng, n_new)
    r = np.asarray(spec.rate.sample(rng, n_alive + n_new), dtype=float)
    return Sessions(
        np.concatenate((np.zeros(n_alive), s_new)),
        np.concatenate((u_alive, u_new)),
        r,
    )


def simulate_stream(
    spec: StreamSpec,
    T: float,
    grid,
    rng: np.random.Generator,
    session_cap: float = DEFAULT_SESSION_CAP,
) -> tuple[Sessions, LoadPath]:
    """Simulate one stream and its raw cumulative load on ``T * grid``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    grid = check_grid(grid)
    expected = expected_sessions(spec, T, grid[-1])
    if expected > session_cap:
        label = spec.name or "stream"
        raise SessionBudgetError(
            f"{label} at T={fmt(T)} expects {expected:.3g} sessions, above the cap of {session_cap:.3g}"
        )
    sessions = generate_sessions(spec, T, grid[-1], rng)
    path = path_from_sessions(sessions, T, grid, slope=spec.mean_load_slope(T))
    return sessions, path


def path_from_sessions(sessions: Sessions, T: float, grid, slope: float | None = None) -> LoadPath:
    grid = check_grid(grid)
    return LoadPath(grid=grid, raw=cumulative_load(sessions, T * grid), T=T, slope=slope)


def superpose(paths: Sequence[LoadPath]) -> LoadPath:
    """Pointwise sum of raw paths sharing one grid and horizon."""
    if not paths:
        raise ValueError("superpose needs at least one path")
    first = paths[0]
    for p in paths[1:]:
        if p.T != first.T or not np.array_equal(p.grid, first.grid):
            raise ValueError("paths must share the same grid and horizon T")
    if len(paths) == 1:
        return LoadPath(grid=first.grid, raw=first.raw, T=first.T, slope=first.slope)
    slopes = [p.slope for p in paths]
    slope = None if any(s is None for s in slopes) else float(sum(slopes))
    return LoadPath(grid=first.grid, raw=np.sum([p.raw for p in paths], axis=0), T=first.T, slope=slope)


def center_scale(path: LoadPath, a_T: float, slope: float | None = None) -> LoadPath:
    """Attach ``(raw - slope * t) / a_T``; ``slope`` defaults to the path's own."""
    if not a_T > 0:
        raise ValueError(f"normalization must be positive, got {a_T}")
    if slope is None:
        slope = path.slope
        if slope is None:
            raise ValueError("no centering slope given and the path carries none")
    centered = (np.asarray(path.raw) - slope * np.asarray(path.grid)) / a_T
    return LoadPath(grid=path.grid, raw=path.raw, T=path.T, slope=float(slope), a_T=float(a_T), centered_scaled=centered)


def write_sessions(fh: TextIO, sessions: Sessions) -> None:
    """One session per line: ``s<TAB>u<TAB>r`` at round-trip precision."""
    for s, u, r in zip(sessions.s, sessions.u, sessions.r):
        fh.write(f"{float(s)!r}\t{float(u)!r}\t{float(r)!r}\n")


def read_sessions(fh: TextIO) -> Sessions:
    rows = []
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        rows.append(tuple(float(p) for p in parts))
    return Sessions.from_records(rows)
