"""Experiment configuration: a JSON document with a versioned, closed schema.

Example::

    {
      "schema_version": 1,
      "streams": [
        {"name": "fast",
         "duration": {"alpha": 1.5, "xm": 1.0},
         "rate": {"kind": "constant", "value": 1.0},
         "intensity": {"coefficient": 1.0, "exponent": 1.0}}
      ],
      "T": [200],
      "grid": {"points": [0.25, 0.5, 0.75, 1.0]},
      "replications": 1000,
      "seed": 1,
      "output": "out",
      "analysis": {"normality": true, "tail": true, "hurst": true}
    }

``grid`` may instead be ``{"n": 4096, "t_max": 1.0}`` for the uniform grid
``t_max * k / n, k = 1..n``.  Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .samplers import DurationLaw, RateLaw
from .traffic import DEFAULT_SESSION_CAP, Intensity, StreamSpec, check_grid

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Analysis:
    normality: bool = True
    tail: bool = True
    hurst: bool = True
    hill_k: tuple[int, int] | None = None  # default: [n/40, n/10]
    hill_tolerance: float = 0.2
    hurst_tolerance: float = 0.07
    hurst_blocks: tuple[int, ...] | None = None
    variance_rtol: float = 0.15
    qq_min_corr: float = 0.98
    reference_size: int = 5000

    @property
    def any(self) -> bool:
        return self.normality or self.tail or self.hurst


@dataclass(frozen=True)
class ExperimentConfig:
    streams: tuple[StreamSpec, ...]
    T: tuple[float, ...]
    grid: np.ndarray = field(repr=False)
    replications: int = 1
    seed: int = 0
    output: str | None = None
    analysis: Analysis = Analysis()
    session_cap: float = DEFAULT_SESSION_CAP
    threads: int | None = None

    def __post_init__(self):
        if not self.streams:
            raise ConfigError("at least one stream is required")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        T = np.asarray(self.T, dtype=float)
        if T.size == 0 or np.any(~np.isfinite(T)) or np.any(T <= 0) or np.any(np.diff(T) <= 0):
            raise ConfigError("T must be a nonempty list of positive, strictly increasing horizons")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        try:
            grid = check_grid(self.grid)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None
        if grid[0] <= 0:
            raise ConfigError("grid times must be positive (t = 0 is implicit)")
        object.__setattr__(self, "grid", grid)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _closed(obj, allowed: set[str], where: str, required: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")
    return obj


def _number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _integer(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return v


def _flag(v, where: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{where}: expected true or false, got {v!r}")
    return v


def _duration(obj, where) -> DurationLaw:
    d = _closed(obj, {"alpha", "xm"}, where, {"alpha"})
    return DurationLaw(_number(d["alpha"], f"{where}.alpha"), _number(d.get("xm", 1.0), f"{where}.xm"))


_RATE_KEYS = {"constant": {"value"}, "lognormal": {"mu", "sigma"}, "pareto": {"alpha", "xm"}}


def _rate(obj, where) -> RateLaw:
    if not isinstance(obj, dict) or obj.get("kind") not in _RATE_KEYS:
        raise ConfigError(f"{where}.kind: expected one of {sorted(_RATE_KEYS)}")
    kind = obj["kind"]
    d = _closed(obj, {"kind"} | _RATE_KEYS[kind], where)
    args = {k: _number(v, f"{where}.{k}") for k, v in d.items() if k != "kind"}
    if kind == "pareto" and "alpha" not in args:
        raise ConfigError(f"{where}: pareto rates need alpha")
    return getattr(RateLaw, kind)(**args)


def _intensity(obj, where) -> Intensity:
    d = _closed(obj, {"coefficient", "exponent"}, where, {"coefficient"})
    return Intensity.power(_number(d["coefficient"], f"{where}.coefficient"), _number(d.get("exponent", 0.0), f"{where}.exponent"))


def _stream(obj, where) -> StreamSpec:
    d = _closed(obj, {"name", "duration", "rate", "intensity"}, where, {"duration", "rate", "intensity"})
    name = d.get("name")
    if name is not None and not isinstance(name, str):
        raise ConfigError(f"{where}.name: expected a string")
    return StreamSpec(_duration(d["duration"], f"{where}.duration"), _rate(d["rate"], f"{where}.rate"), _intensity(d["intensity"], f"{where}.intensity"), name or "")


def _grid(obj) -> np.ndarray:
    d = _closed(obj, {"points", "n", "t_max"}, "grid")
    if "points" in d:
        if set(d) != {"points"} or not isinstance(d["points"], list):
            raise ConfigError("grid: give either points or n/t_max")
        return np.array([_number(v, "grid.points") for v in d["points"]])
    if "n" not in d:
        raise ConfigError("grid: give either points or n/t_max")
    n = _integer(d["n"], "grid.n")
    if n < 1:
        raise ConfigError("grid.n must be positive")
    return _number(d.get("t_max", 1.0), "grid.t_max") * np.arange(1, n + 1) / n


def _analysis(obj) -> Analysis:
    d = _closed(obj, set(Analysis.__dataclass_fields__), "analysis")
    kw = {}
    for k in ("normality", "tail", "hurst"):
        if k in d:
            kw[k] = _flag(d[k], f"analysis.{k}")
    for k in ("hill_tolerance", "hurst_tolerance", "variance_rtol", "qq_min_corr"):
        if k in d:
            kw[k] = _number(d[k], f"analysis.{k}")
    if "reference_size" in d:
        kw["reference_size"] = _integer(d["reference_size"], "analysis.reference_size")
    if "hill_k" in d:
        k = d["hill_k"]
        if not (isinstance(k, list) and len(k) == 2):
            raise ConfigError("analysis.hill_k: expected [k_lo, k_hi]")
        lo, hi = (_integer(v, "analysis.hill_k") for v in k)
        if not 1 <= lo < hi:
            raise ConfigError("analysis.hill_k: need 1 <= k_lo < k_hi")
        kw["hill_k"] = (lo, hi)
    if "hurst_blocks" in d:
        b = d["hurst_blocks"]
        if not isinstance(b, list) or len(b) < 2:
            raise ConfigError("analysis.hurst_blocks: expected a list of at least two block sizes")
        kw["hurst_blocks"] = tuple(_integer(v, "analysis.hurst_blocks") for v in b)
    return Analysis(**kw)


_TOP_KEYS = {"schema_version", "streams", "T", "grid", "replications", "seed", "output", "analysis", "session_cap", "threads"}


def parse_config(doc: dict) -> ExperimentConfig:
    d = _closed(doc, _TOP_KEYS, "config", {"schema_version", "streams", "T", "grid"})
    if d["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {d['schema_version']!r}; expected {SCHEMA_VERSION}")
    if not isinstance(d["streams"], list):
        raise ConfigError("streams: expected a list")
    try:
        streams = tuple(_stream(s, f"streams[{i}]") for i, s in enumerate(d["streams"]))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"streams: {exc}") from None
    T = d["T"] if isinstance(d["T"], list) else [d["T"]]
    threads = d.get("threads")
    if threads is not None and _integer(threads, "threads") < 1:
        raise ConfigError("threads must be positive")
    output = d.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output: expected a path string")
    return ExperimentConfig(
        streams=streams,
        T=tuple(_number(t, "T") for t in T),
        grid=_grid(d["grid"]),
        replications=_integer(d.get("replications", 1), "replications"),
        seed=_integer(d.get("seed", 0), "seed"),
        output=output,
        analysis=_analysis(d.get("analysis", {})),
        session_cap=_number(d.get("session_cap", DEFAULT_SESSION_CAP), "session_cap"),
        threads=threads,
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(doc)
