"""Minimal deterministic SVG plots: QQ scatter, Hill trace with band, path overlays."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .tabular import read_table

WIDTH, HEIGHT = 640, 480
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class SeriesFormatError(ValueError):
    pass


class _Frame:
    def __init__(self, xs: Sequence[np.ndarray], ys: Sequence[np.ndarray]):
        x = np.concatenate([np.ravel(a) for a in xs])
        y = np.concatenate([np.ravel(a) for a in ys])
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        if x.size == 0 or y.size == 0:
            raise SeriesFormatError("no finite values to plot")
        self.x0, self.x1 = _padded(x.min(), x.max())
        self.y0, self.y1 = _padded(y.min(), y.max())

    def px(self, x):
        return MARGIN + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)

    def py(self, y):
        return HEIGHT - MARGIN - (np.asarray(y, dtype=float) - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
    else:
        pad = 0.05 * (hi - lo)
    return float(lo - pad), float(hi + pad)


def _c(v: float) -> str:
    return f"{v:.2f}"


def _points(fr: _Frame, x, y) -> str:
    keep = np.isfinite(x) & np.isfinite(y)
    return " ".join(f"{_c(a)},{_c(b)}" for a, b in zip(fr.px(x[keep]), fr.py(y[keep])))


def _document(fr: _Frame, title: str, xlabel: str, ylabel: str, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect class="axes" x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.0f}" y="{MARGIN / 2:.0f}" text-anchor="middle" font-size="15">{_escape(title)}</text>',
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 14}" text-anchor="middle" font-size="12">{_escape(xlabel)}</text>',
        f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {HEIGHT / 2:.0f})">{_escape(ylabel)}</text>',
    ]
    for v in _ticks(fr.x0, fr.x1):
        x = fr.px(v)
        head.append(f'<text x="{_c(x)}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" font-size="10">{_num(v)}</text>')
    for v in _ticks(fr.y0, fr.y1):
        y = fr.py(v)
        head.append(f'<text x="{MARGIN - 6}" y="{_c(y + 3)}" text-anchor="end" font-size="10">{_num(v)}</text>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (mult * step) <= n:
            step *= mult
            break
    return np.arange(math.ceil(lo / step), math.floor(hi / step) + 1) * step


def _num(v: float) -> str:
    return f"{v:.4g}" if v != 0 else "0"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def qq_svg(theoretical, empirical, slope: float | None = None, intercept: float | None = None, title: str = "QQ plot") -> str:
    x, y = np.asarray(theoretical, dtype=float), np.asarray(empirical, dtype=float)
    fr = _Frame([x], [y])
    body = [f'<circle class="mark" cx="{_c(a)}" cy="{_c(b)}" r="2.5" fill="{COLORS[0]}"/>' for a, b in zip(fr.px(x), fr.py(y)) if np.isfinite(a) and np.isfinite(b)]
    if slope is not None and intercept is not None and np.isfinite(slope) and np.isfinite(intercept):
        xs = np.array([fr.x0, fr.x1])
        ys = intercept + slope * xs
        body.append(f'<line class="reference" x1="{_c(fr.px(xs[0]))}" y1="{_c(fr.py(ys[0]))}" x2="{_c(fr.px(xs[1]))}" y2="{_c(fr.py(ys[1]))}" stroke="{COLORS[1]}"/>')
    return _document(fr, title, "theoretical quantile", "empirical quantile", body)


def hill_svg(k, alpha, ci_halfwidth=None, title: str = "Hill plot") -> str:
    k, alpha = np.asarray(k, dtype=float), np.asarray(alpha, dtype=float)
    if ci_halfwidth is None:
        ci_halfwidth = 1.96 * alpha / np.sqrt(k)
    lo, hi = alpha - ci_halfwidth, alpha + ci_halfwidth
    fr = _Frame([k], [lo, hi])
    keep = np.isfinite(lo) & np.isfinite(hi)
    band = _points(fr, np.r_[k[keep], k[keep][::-1]], np.r_[hi[keep], lo[keep][::-1]])
    body = [
        f'<polygon class="band" points="{band}" fill="{COLORS[0]}" fill-opacity="0.2" stroke="none"/>',
        f'<polyline class="trace" points="{_points(fr, k, alpha)}" fill="none" stroke="{COLORS[0]}"/>',
    ]
    return _document(fr, title, "k (order statistics)", "alpha estimate", body)


def paths_svg(series: Sequence[tuple[np.ndarray, np.ndarray]], title: str = "paths") -> str:
    if not series:
        raise SeriesFormatError("no paths to plot")
    fr = _Frame([t for t, _ in series], [v for _, v in series])
    body = [
        f'<polyline class="path" points="{_points(fr, np.asarray(t, float), np.asarray(v, float))}" fill="none" stroke="{COLORS[i % len(COLORS)]}"/>'
        for i, (t, v) in enumerate(series)
    ]
    return _document(fr, title, "t", "value", body)


def _load(path: Path) -> tuple[dict, dict]:
    try:
        with open(path) as fh:
            meta, cols = read_table(fh)
    except (ValueError, IndexError) as exc:
        raise SeriesFormatError(f"{path}: {exc}") from None
    if not cols:
        raise SeriesFormatError(f"{path}: no columns")
    return meta, cols


def _need(cols: dict, names: Sequence[str], path) -> None:
    missing = [n for n in names if n not in cols]
    if missing:
        raise SeriesFormatError(f"{path}: missing columns {missing}")


def _path_series(meta, cols, path) -> list[tuple[np.ndarray, np.ndarray]]:
    _need(cols, ["t"], path)
    t = cols["t"]
    kind = meta.get("kind")
    if kind == "load_path":
        key = "centered_scaled" if "centered_scaled" in cols else "raw"
        return [(t, cols[key])]
    return [(t, v) for name, v in cols.items() if name.startswith("value")]


def render_files(paths: Sequence[Path], out: Path) -> list[Path]:
    """One SVG per QQ, Hill or generic two-column file; path files share ``paths.svg``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    overlay = []
    for p in map(Path, paths):
        meta, cols = _load(p)
        kind = meta.get("kind")
        target = out / f"{p.stem}.svg"
        if kind in ("load_path", "reference_path"):
            overlay += _path_series(meta, cols, p)
            continue
        if kind == "hill":
            _need(cols, ["k", "alpha"], p)
            svg = hill_svg(cols["k"], cols["alpha"], cols.get("ci_halfwidth"), title=p.stem)
        elif kind in ("qq", "qq_log"):
            _need(cols, ["theoretical", "empirical"], p)
            svg = qq_svg(cols["theoretical"], cols["empirical"], meta.get("slope"), meta.get("intercept"), title=p.stem)
        elif len(cols) == 2:
            x, y = cols.values()
            svg = qq_svg(x, y, title=p.stem)
        else:
            raise SeriesFormatError(f"{p}: expected a two-column series or a known kind, found {len(cols)} columns")
        target.write_text(svg)
        written.append(target)
    if overlay:
        target = out / "paths.svg"
        target.write_text(paths_svg(overlay))
        written.append(target)
    return written
