"""
Matrix files.

csv: first line "m,N", then m rows of N comma-separated reals.
raw: 16-byte header (magic b"QLAB", u32 m, u32 N, u32 reserved = 0, all
little-endian) followed by m*N little-endian float64 values in row-major order.
"""

import csv
import hashlib
import os
import struct

import numpy as np

from quant_lab.linops.calibration import CalibrationMatrix
from quant_lab.utils.errors import DimensionHeaderMismatch, NonFiniteEntry, ParseError

CSV = "csv"
RAW = "raw"
MAGIC = b"QLAB"
HEADER = struct.Struct("<4sIII")


def infer_format(path):
    return CSV if str(path).lower().endswith(".csv") else RAW


def file_digest(path):
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def _parse_dims(cells, path):
    try:
        m, n = (int(c) for c in cells)
    except ValueError as e:
        raise ParseError(f"{path}: header must be 'm,N', got {','.join(cells)}") from e
    if m < 1 or n < 1:
        raise ParseError(f"{path}: header dimensions must be positive, got {m}x{n}")
    return m, n


def _load_csv(path):
    with open(path, newline="") as f:
        rows = [row for row in csv.reader(f) if any(cell.strip() for cell in row)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    if len(rows[0]) != 2:
        raise ParseError(f"{path}: header must be 'm,N', got {','.join(rows[0])}")
    m, n = _parse_dims(rows[0], path)
    body = rows[1:]
    if len(body) != m:
        raise DimensionHeaderMismatch(f"{path}: header says {m} rows, found {len(body)}")
    data = np.empty((m, n))
    for i, row in enumerate(body):
        if len(row) != n:
            raise ParseError(f"{path}: row {i + 1} has {len(row)} columns, expected {n}")
        try:
            data[i] = [float(cell) for cell in row]
        except ValueError as e:
            raise ParseError(f"{path}: row {i + 1} has a malformed number") from e
    return data


def _load_raw(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < HEADER.size:
        raise ParseError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, m, n, reserved = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if reserved != 0:
        raise ParseError(f"{path}: reserved header field is {reserved}, expected 0")
    payload = blob[HEADER.size :]
    if len(payload) != m * n * 8:
        raise DimensionHeaderMismatch(
            f"{path}: header says {m}x{n} ({m * n * 8} bytes), payload has {len(payload)} bytes"
        )
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(m, n)


def load_matrix(path, fmt=None, name=None) -> CalibrationMatrix:
    fmt = fmt or infer_format(path)
    if fmt not in (CSV, RAW):
        raise ParseError(f"unknown matrix format '{fmt}'")
    data = _load_csv(path) if fmt == CSV else _load_raw(path)
    if not np.all(np.isfinite(data)):
        i, j = np.argwhere(~np.isfinite(data))[0]
        raise NonFiniteEntry(f"{path}: non-finite entry at row {i + 1}, column {j + 1}")
    return CalibrationMatrix(data, name=name or os.path.basename(str(path)))


def save_matrix(path, X, fmt=None):
    data = np.asarray(X, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    fmt = fmt or infer_format(path)
    m, n = data.shape
    if fmt == CSV:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([m, n])
            writer.writerows([[repr(float(v)) for v in row] for row in data])
    elif fmt == RAW:
        with open(path, "wb") as f:
            f.write(HEADER.pack(MAGIC, m, n, 0))
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    else:
        raise ParseError(f"unknown matrix format '{fmt}'")
