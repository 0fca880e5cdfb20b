"""Columnar CSV and raw binary tables.

Binary layout: 16-byte header (magic ``MTM1``, little-endian u32 row count,
u32 column count, 4 zero bytes) followed by row-major little-endian float64.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import InputFormatError

MAGIC = b"MTM1"
_HEADER = struct.Struct("<4sII4x")


def _fmt_from_path(path):
    return "bin" if str(path).endswith(".bin") else "csv"


def table_path(stem, fmt):
    return f"{stem}.{'bin' if fmt == 'bin' else 'csv'}"


def write_table(path, header, data, fmt=None):
    data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"table has shape {data.shape}, header has {len(header)} columns")
    fmt = fmt or _fmt_from_path(path)
    d = os.path.dirname(str(path))
    if d:
        os.makedirs(d, exist_ok=True)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, data.shape[0], data.shape[1]))
            fh.write(data.astype("<f8").tobytes())
    else:
        # %.17g round-trips every double exactly
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_table(path, header=None):
    """Read a table; returns (column names or None for binary, data)."""
    fmt = _fmt_from_path(path)
    try:
        if fmt == "bin":
            with open(path, "rb") as fh:
                raw = fh.read()
            if len(raw) < _HEADER.size:
                raise InputFormatError(f"{path}: truncated header")
            magic, n, ncols = _HEADER.unpack_from(raw)
            if magic != MAGIC:
                raise InputFormatError(f"{path}: bad magic {magic!r}")
            body = raw[_HEADER.size:]
            if len(body) != 8 * n * ncols:
                raise InputFormatError(
                    f"{path}: expected {n}x{ncols} doubles, found {len(body)} bytes")
            data = np.frombuffer(body, dtype="<f8").reshape(n, ncols).astype(np.float64)
            names = None
        else:
            with open(path) as fh:
                first = fh.readline().strip()
            names = [c.strip() for c in first.split(",")]
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except InputFormatError:
        raise
    except (OSError, ValueError) as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
    if header is not None:
        if names is not None and names != list(header):
            raise InputFormatError(f"{path}: header {names} != expected {list(header)}")
        if data.shape[1] != len(header):
            raise InputFormatError(f"{path}: {data.shape[1]} columns, expected {len(header)}")
    if not np.all(np.isfinite(data)):
        raise InputFormatError(f"{path}: non-finite entries")
    return names, data


def complex_columns(*arrays):
    cols = []
    for a in arrays:
        a = np.asarray(a)
        if np.iscomplexobj(a):
            cols += [a.real, a.imag]
        else:
            cols.append(a)
    return np.column_stack(cols)
