"""CSV serialisation of traces and trajectories.

Floats are written with ``repr``, the shortest string that round-trips to
the same double, so files are byte-reproducible and lossless.  Undefined
entries are written as ``nan``.
"""

import csv
import io
import json
import math

import numpy as np

__all__ = ["format_value", "write_columns", "columns_to_text", "read_columns", "write_json"]


def format_value(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def columns_to_text(columns):
    """Render an ordered mapping name -> 1-D array as CSV text with a header."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    lengths = {a.shape[0] for a in arrays}
    if len(lengths) > 1:
        raise ValueError("columns must have equal length")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    n = lengths.pop() if lengths else 0
    for i in range(n):
        writer.writerow([format_value(a[i]) for a in arrays])
    return buf.getvalue()


def write_columns(path, columns):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(columns_to_text(columns))


def read_columns(path):
    """Read a CSV written by :func:`write_columns` into name -> float array.

    Raises ``ValueError`` on an empty file or non-numeric cells.
    """
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    data = {h: np.empty(len(body)) for h in header}
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        for h, cell in zip(header, row):
            try:
                data[h][i - 2] = float(cell)
            except ValueError:
                raise ValueError(f"{path}:{i}: non-numeric value {cell!r} in column {h!r}") from None
    return data


def write_json(path, record):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
