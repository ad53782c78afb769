"""Flow-record ingestion: parse delimited flow files and bucket bytes into windows."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .estimators import ADResult, HillTrace, QQSeries, anderson_darling_normal, detrend_deseasonalize, hill, qq_exponential_log, qq_normal
from .tabular import fmt
from .traffic import StreamSpec, generate_sessions, occupancy

REQUIRED_COLUMNS = ("start", "duration", "bytes", "protocol")
MODES = ("start-window", "uniform-spread")


class FlowParseError(ValueError):
    def __init__(self, message: str, line: int, column: str | None = None):
        where = f"line {line}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class FlowRecord:
    start: float
    duration: float
    bytes: int
    protocol: str

    def __post_init__(self):
        if self.bytes < 0:
            raise ValueError("bytes must be nonnegative")
        if not self.duration >= 0:
            raise ValueError("duration must be nonnegative")


def _detect_delimiter(header: str) -> str:
    return "\t" if "\t" in header else ","


def parse_flows(source: TextIO | Iterable[str], delimiter: str | None = None) -> list[FlowRecord]:
    """Parse one flow per line after a header naming the columns.

    The header must name ``start``, ``duration``, ``bytes`` and ``protocol`` in
    any order; other columns are ignored.  The delimiter (tab or comma) is
    taken from the header line unless given.
    """
    records = []
    columns = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if columns is None:
            delim = delimiter or _detect_delimiter(line)
            names = [c.strip().lower() for c in line.split(delim)]
            missing = [c for c in REQUIRED_COLUMNS if c not in names]
            if missing:
                raise FlowParseError(f"header lacks columns {missing}", lineno)
            dupes = {c for c in REQUIRED_COLUMNS if names.count(c) > 1}
            if dupes:
                raise FlowParseError(f"header repeats columns {sorted(dupes)}", lineno)
            columns = {c: names.index(c) for c in REQUIRED_COLUMNS}
            width = len(names)
            continue
        fields = line.split(delim)
        if len(fields) != width:
            raise FlowParseError(f"expected {width} fields, got {len(fields)}", lineno)
        records.append(_parse_row(fields, columns, lineno))
    return records


def _parse_row(fields, columns, lineno) -> FlowRecord:
    def get(name):
        return fields[columns[name]].strip()

    try:
        start = float(get("start"))
        if not math.isfinite(start):
            raise ValueError
    except ValueError:
        raise FlowParseError(f"bad start {get('start')!r}", lineno, "start") from None
    try:
        duration = float(get("duration"))
        if not (math.isfinite(duration) and duration >= 0):
            raise ValueError
    except ValueError:
        raise FlowParseError(f"duration must be a finite nonnegative number, got {get('duration')!r}", lineno, "duration") from None
    try:
        nbytes = int(get("bytes"))
        if nbytes < 0:
            raise ValueError
    except ValueError:
        raise FlowParseError(f"bytes must be a nonnegative integer, got {get('bytes')!r}", lineno, "bytes") from None
    protocol = get("protocol")
    if not protocol:
        raise FlowParseError("empty protocol tag", lineno, "protocol")
    return FlowRecord(start, duration, nbytes, protocol)


def write_flows(fh: TextIO, records: Sequence[FlowRecord]) -> None:
    fh.write("start\tduration\tbytes\tprotocol\n")
    for rec in records:
        fh.write(f"{rec.start!r}\t{rec.duration!r}\t{rec.bytes}\t{rec.protocol}\n")


@dataclass(frozen=True)
class WindowSeries:
    """Bytes per window and protocol tag; row ``i`` is window ``first_index + i``."""

    window: float
    origin: float
    first_index: int
    protocols: tuple[str, ...]
    totals: np.ndarray = field(repr=False)  # (n_windows, n_protocols)

    @property
    def n_windows(self) -> int:
        return self.totals.shape[0]

    @property
    def window_starts(self) -> np.ndarray:
        return self.origin + self.window * (self.first_index + np.arange(self.n_windows))

    def series(self, protocol: str) -> np.ndarray:
        return self.totals[:, self.protocols.index(protocol)]

    def total(self) -> np.ndarray:
        return self.totals.sum(axis=1)

    def write(self, fh: TextIO) -> None:
        fh.write("\t".join(["window", "start", *self.protocols]) + "\n")
        for i, row in enumerate(self.totals):
            cells = [str(self.first_index + i), fmt(self.window_starts[i]), *(fmt(v) for v in row)]
            fh.write("\t".join(cells) + "\n")


def bucket_bytes(
    records: Sequence[FlowRecord],
    window_seconds: float,
    attribution: str = "start-window",
    origin: float = 0.0,
    until: float | None = None,
) -> WindowSeries:
    """Total bytes per window and protocol.

    ``start-window`` credits every byte of a flow to the window holding its
    start; ``uniform-spread`` splits bytes in proportion to the flow's
    overlap with each window.  With ``until`` set, only the windows inside
    ``[origin, until)`` are kept and bytes credited outside them are dropped;
    this trims the partial windows at the edges of a capture.
    """
    if not window_seconds > 0:
        raise ValueError("window length must be positive")
    if attribution not in MODES:
        raise ValueError(f"unknown attribution {attribution!r}; expected one of {MODES}")
    protocols = tuple(sorted({r.protocol for r in records}))
    if not records:
        return WindowSeries(window_seconds, origin, 0, protocols, np.zeros((0, 0)))
    start = np.array([r.start for r in records])
    dur = np.array([r.duration for r in records])
    nbytes = np.array([r.bytes for r in records], dtype=float)
    tag = np.array([protocols.index(r.protocol) for r in records])
    w = window_seconds
    first = np.floor((start - origin) / w).astype(np.int64)
    if attribution == "start-window":
        last = first
    else:
        last = np.maximum(first, np.floor((start + dur - origin) / w).astype(np.int64))
        last = np.where(dur > 0, last, first)
    lo, hi = int(first.min()), int(last.max())
    if until is not None:
        if not until > origin:
            raise ValueError("until must exceed origin")
        lo, hi = 0, math.ceil((until - origin) / w) - 1
    totals = np.zeros((hi - lo + 1, len(protocols)))
    if attribution == "start-window":
        keep = (first >= lo) & (first <= hi)
        np.add.at(totals, (first[keep] - lo, tag[keep]), nbytes[keep])
    else:
        span = last - first + 1
        flow = np.repeat(np.arange(len(records)), span)
        offset = np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span)
        win = first[flow] + offset
        overlap = occupancy(w, start[flow] - (origin + win * w), dur[flow])
        # normalize by the flow's summed overlap rather than its duration, so that
        # bytes are conserved even when a tiny duration rounds the overlap to zero
        covered = np.bincount(flow, weights=overlap, minlength=len(records))
        spread = covered[flow] > 0
        share = np.where(spread, overlap / np.where(spread, covered[flow], 1.0), offset == 0)
        keep = (win >= lo) & (win <= hi)
        np.add.at(totals, (win[keep] - lo, tag[flow][keep]), (nbytes[flow] * share)[keep])
    return WindowSeries(window_seconds, origin, lo, protocols, totals)


def gaussian_window_flows(
    n_windows: int,
    window_seconds: float,
    per_window: int,
    mean_bytes: float,
    sd_bytes: float,
    rng: np.random.Generator,
    protocol: str = "tcp",
    max_duration: float = 1.0,
) -> list[FlowRecord]:
    """Exactly ``per_window`` short flows per window with normal byte counts (clipped at 0)."""
    k = np.repeat(np.arange(n_windows), per_window)
    start = (k + rng.random(k.size)) * window_seconds
    dur = max_duration * rng.random(k.size)
    nbytes = np.maximum(0, np.rint(rng.normal(mean_bytes, sd_bytes, k.size))).astype(np.int64)
    return [FlowRecord(float(s), float(d), int(b), protocol) for s, d, b in zip(start, dur, nbytes)]


def synthetic_flows(streams: Mapping[str, StreamSpec], horizon: float, rng: np.random.Generator) -> list[FlowRecord]:
    """Flows drawn from stream specs in seconds; bytes are rate times duration, rounded."""
    records = []
    for tag in sorted(streams):
        sessions = generate_sessions(streams[tag], 1.0, horizon, rng)
        nbytes = np.rint(sessions.r * sessions.u).astype(np.int64)
        records += [FlowRecord(float(s), float(u), int(b), tag) for s, u, b in zip(sessions.s, sessions.u, nbytes)]
    records.sort(key=lambda r: (r.start, r.protocol))
    return records


@dataclass(frozen=True)
class SeriesDiagnostics:
    name: str
    n: int
    ad: ADResult | None
    qq_normal: QQSeries | None
    qq_log: QQSeries | None
    hill: HillTrace | None
    hill_region: tuple[int, int] | None
    hill_alpha: float | None


def hill_region(n_positive: int) -> tuple[int, int] | None:
    """Default read-off window for the Hill plot: between 2% and 10% of the sample."""
    k_lo, k_hi = max(5, n_positive // 50), n_positive // 10
    return (k_lo, k_hi) if k_hi > k_lo else None


def diagnose(name: str, totals: np.ndarray, period: int | None = None, top_m: int = 55) -> SeriesDiagnostics:
    """Normal QQ and Anderson-Darling on detrended totals; Hill and log-QQ on raw positive totals."""
    totals = np.asarray(totals, dtype=float)
    n = totals.size
    ad = qqn = qql = trace = region = alpha = None
    if n >= max(8, 3 if period is None else 2 * period):
        resid = detrend_deseasonalize(totals, period)
        if resid.std() > 0:
            ad = anderson_darling_normal(resid)
            qqn = qq_normal(resid)
    pos = totals[totals > 0]
    if pos.size >= 3 and np.ptp(pos) > 0:
        qql = qq_exponential_log(pos, min(top_m, pos.size))
        trace = hill(pos, pos.size - 1)
        region = hill_region(pos.size)
        if region is not None:
            alpha = trace.mean_over(*region)
    return SeriesDiagnostics(name, n, ad, qqn, qql, trace, region, alpha)
