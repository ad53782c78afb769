"""Tab-separated series files shared by paths, estimator traces and window series.

Layout::

    # key=value key=value ...      (optional metadata line)
    col_a<TAB>col_b ...            (column header)
    1.5<TAB>2.25                   (rows, floats at 17 significant digits)
"""
from __future__ import annotations

import io
from typing import Iterable, Mapping, TextIO

import numpy as np

FLOAT_FORMAT = ".17g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), FLOAT_FORMAT)
    return str(x)


def write_table(fh: TextIO, columns: Mapping[str, Iterable], meta: Mapping[str, object] | None = None) -> None:
    names = list(columns)
    cols = [np.asarray(list(columns[n]) if not isinstance(columns[n], np.ndarray) else columns[n]) for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
    if meta:
        fh.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\n")
    fh.write("\t".join(names) + "\n")
    for row in zip(*cols):
        fh.write("\t".join(fmt(v) for v in row) + "\n")


def table_string(columns, meta=None) -> str:
    buf = io.StringIO()
    write_table(buf, columns, meta)
    return buf.getvalue()


def _parse_meta_value(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_table(fh: TextIO) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of :func:`write_table`; every column is parsed as float."""
    meta: dict = {}
    header = None
    rows = []
    for lineno, line in enumerate(fh, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if header is None and line.startswith("#"):
            for item in line[1:].split():
                if "=" not in item:
                    raise ValueError(f"line {lineno}: malformed metadata item {item!r}")
                k, v = item.split("=", 1)
                meta[k] = _parse_meta_value(v)
            continue
        fields = line.split("\t")
        if header is None:
            header = fields
            continue
        if len(fields) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if header is None:
        raise ValueError("series file has no column header")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return meta, {name: data[:, i] for i, name in enumerate(header)}
