"""Numeric containers and bit-exact serialization.

The normative binary interchange is the FVEC format:

    bytes 0..3   magic  b"FVEC"
    bytes 4..7   version, unsigned 32-bit little-endian (currently 1)
    bytes 8..11  rows,    unsigned 32-bit little-endian
    bytes 12..15 cols,    unsigned 32-bit little-endian
    bytes 16..   rows*cols IEEE-754 float32, little-endian, row-major

Matrices live in memory as float64 ndarrays; float32 is a transport
precision only.  A CSV sidecar format (header ``v0,v1,...``) is accepted
for human-inspectable fixtures, and labels travel as ``id,label`` CSV.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, FormatError, ShapeError, TruncationError

FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def validate_matrix(data, name: str = "matrix", min_cols: int = 1) -> np.ndarray:
    """Return ``data`` as a finite 2-D float64 array, raising on violations."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[1] < min_cols:
        raise ShapeError(f"{name} needs at least {min_cols} column(s), got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    return arr


def validate_logits(data, name: str = "logits") -> np.ndarray:
    """Logit matrices need at least two classes."""
    return validate_matrix(data, name=name, min_cols=2)


def validate_labels(labels, n_classes: int | None = None, n_rows: int | None = None) -> np.ndarray:
    """Return labels as a 1-D int64 array of class indices in [0, n_classes)."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got ndim={arr.ndim}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise DomainError("labels must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 0:
        raise DomainError("labels must be non-negative")
    if n_classes is not None and arr.size and arr.max() >= n_classes:
        raise DomainError(f"label {arr.max()} out of range for {n_classes} classes")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise ShapeError(f"got {arr.shape[0]} labels for {n_rows} rows")
    return arr


@dataclass(frozen=True)
class LinearHead:
    """Final linear classifier: logits = features @ weights + bias."""

    weights: np.ndarray  # (feature_dim, n_classes)
    bias: np.ndarray  # (n_classes,)

    def __post_init__(self):
        w = validate_matrix(self.weights, name="head weights", min_cols=2)
        b = np.asarray(self.bias, dtype=np.float64)
        if b.ndim != 1:
            raise ShapeError(f"head bias must be 1-D, got ndim={b.ndim}")
        if b.shape[0] != w.shape[1]:
            raise ShapeError(f"bias length {b.shape[0]} != weight cols {w.shape[1]}")
        if not np.all(np.isfinite(b)):
            raise DataError("head bias contains non-finite entries")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file + rename in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_fvec(matrix, path) -> None:
    """Serialize a matrix to the FVEC layout (deterministic, bit-exact)."""
    arr = validate_matrix(matrix, name="matrix")
    rows, cols = arr.shape
    header = _HEADER.pack(FVEC_MAGIC, FVEC_VERSION, rows, cols)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_fvec(path) -> np.ndarray:
    """Read an FVEC file back into a float64 matrix."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise TruncationError(f"{path}: file shorter than the 16-byte header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != FVEC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FVEC_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if cols < 1:
        raise FormatError(f"{path}: cols must be >= 1, got {cols}")
    expected = rows * cols * 4
    actual = len(blob) - _HEADER.size
    if actual != expected:
        raise TruncationError(f"{path}: expected {expected} payload bytes, found {actual}")
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    arr = flat.astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: payload contains non-finite entries")
    return arr


def write_labels_csv(labels, path) -> None:
    """Write labels as ``id,label`` rows with sequential ids."""
    arr = validate_labels(labels)
    lines = ["id,label"]
    lines.extend(f"{i},{int(v)}" for i, v in enumerate(arr))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path) -> np.ndarray:
    """Parse an ``id,label`` CSV into an int64 label vector (file row order)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0][:2]] != ["id", "label"]:
        raise FormatError(f"{path}: expected 'id,label' header")
    labels = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise FormatError(f"{path}:{lineno}: expected two columns")
        try:
            value = int(row[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-integer label {row[1]!r}") from exc
        if value < 0:
            raise DomainError(f"{path}:{lineno}: negative label {value}")
        labels.append(value)
    return np.asarray(labels, dtype=np.int64)


def write_matrix_csv(matrix, path) -> None:
    """Write a matrix as CSV with a ``v0,v1,...`` header (one row per sample)."""
    arr = validate_matrix(matrix, name="matrix")
    lines = [",".join(f"v{j}" for j in range(arr.shape[1]))]
    lines.extend(",".join(repr(float(v)) for v in row) for row in arr)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    """Read a ``v0,v1,...`` CSV back into a float64 matrix."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or not all(c.strip() == f"v{j}" for j, c in enumerate(rows[0])):
        raise FormatError(f"{path}: expected 'v0,v1,...' header")
    cols = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != cols:
            raise FormatError(f"{path}:{lineno}: expected {cols} columns, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric entry") from exc
    arr = np.asarray(data, dtype=np.float64).reshape(len(data), cols)
    return validate_matrix(arr, name=os.fspath(path))
