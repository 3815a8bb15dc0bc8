"""CSV I/O for experiment results and sample data.

Result files start with ``# key: value`` metadata lines, followed by a
header row and one row per (point, estimator). Floats are written with 17
significant digits, so reading a file back reproduces every value exactly.
"""
from __future__ import annotations

import csv

import numpy as np

from .experiments import ExperimentResult, ResultRow

__all__ = [
    "DataFormatError",
    "RESULT_HEADER",
    "emit_csv",
    "fmt_float",
    "ingest_csv",
    "read_data_csv",
    "read_matrix_csv",
    "write_data_csv",
    "write_matrix_csv",
]

RESULT_HEADER = ("point", "estimator", "mean_risk", "std_error", "hyper")


class DataFormatError(ValueError):
    """A file exists but its contents do not follow the expected layout."""


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"{where}: {text!r} is not a number") from None


def emit_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key in sorted(result.metadata):
            val = str(result.metadata[key])
            if "\n" in val or "\n" in key or ": " in key:
                raise ValueError(f"metadata entry {key!r} cannot be written on one line")
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        for r in result.rows:
            w.writerow([fmt_float(r.point), r.estimator, fmt_float(r.mean_risk),
                        fmt_float(r.std_error), fmt_float(r.hyper)])


def ingest_csv(path) -> ExperimentResult:
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines) and lines[k].startswith("# "):
        key, sep, val = lines[k][2:].partition(": ")
        if not sep:
            raise DataFormatError(f"line {k + 1}: metadata needs 'key: value'")
        meta[key] = val
        k += 1
    reader = csv.reader(lines[k:])
    header = next(reader, None)
    if header is None or tuple(header) != RESULT_HEADER:
        raise DataFormatError(f"expected header {','.join(RESULT_HEADER)}")
    rows = []
    for i, rec in enumerate(reader, start=k + 2):
        if not rec:
            continue
        if len(rec) != len(RESULT_HEADER):
            raise DataFormatError(f"line {i}: expected {len(RESULT_HEADER)} fields")
        where = f"line {i}"
        rows.append(ResultRow(_parse_float(rec[0], where), rec[1], _parse_float(rec[2], where),
                              _parse_float(rec[3], where), _parse_float(rec[4], where)))
    return ExperimentResult(rows, meta)


def read_data_csv(path):
    """Read a sample file with columns ``x0..x{d-1}`` and an optional final ``y``.

    Returns ``(x, y)`` with ``y`` set to ``None`` when the column is absent.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_y = bool(header) and header[-1] == "y"
    feats = header[:-1] if has_y else header
    if not feats or feats != [f"x{j}" for j in range(len(feats))]:
        raise DataFormatError(f"{path}: header must be x0..x{{d-1}} with an optional final y")
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, rec in enumerate(rows[1:]):
        if len(rec) != width:
            raise DataFormatError(f"{path}: row {i + 2} has {len(rec)} fields, expected {width}")
        for j, v in enumerate(rec):
            data[i, j] = _parse_float(v, f"{path}: row {i + 2}")
    if data.shape[0] == 0:
        raise DataFormatError(f"{path}: no samples")
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path}: non-finite values")
    if has_y:
        return data[:, :-1], data[:, -1]
    return data, None


def write_data_csv(path, x, y=None) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    header = [f"x{j}" for j in range(x.shape[1])]
    if y is not None:
        header.append("y")
        x = np.column_stack([x, np.asarray(y, dtype=float).reshape(-1)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in x:
            w.writerow([fmt_float(v) for v in row])


def write_matrix_csv(path, m, prefix: str = "c", header=None) -> None:
    """Write a numeric table; columns are ``prefix0, prefix1, ...`` unless ``header`` is given."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if header is None:
        header = [f"{prefix}{j}" for j in range(m.shape[1])]
    elif len(header) != m.shape[1]:
        raise ValueError("header length must match the column count")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in m:
            w.writerow([fmt_float(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    """Numeric table with a header row; returns the body as a 2-d array."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: needs a header and at least one row")
    width = len(rows[0])
    out = np.empty((len(rows) - 1, width))
    for i, rec in enumerate(rows[1:]):
        if len(rec) != width:
            raise DataFormatError(f"{path}: row {i + 2} has {len(rec)} fields, expected {width}")
        out[i] = [_parse_float(v, f"{path}: row {i + 2}") for v in rec]
    if not np.all(np.isfinite(out)):
        raise DataFormatError(f"{path}: non-finite values")
    return out
