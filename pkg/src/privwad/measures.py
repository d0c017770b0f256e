"""Point-cloud data model and matrix file formats.

Two on-disk formats are supported:

* CSV: header-free, one support point per line, comma separated, LF endings.
* WADM: a little-endian binary container::

      bytes 0-3    b"WADM"
      bytes 4-7    format version (u32, currently 1)
      bytes 8-15   rows (u64)
      bytes 16-23  dim (u64)
      bytes 24-    rows*dim float64 values, row-major
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

WADM_MAGIC = b"WADM"
WADM_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

Format = Literal["csv", "binary"]


class MatrixFormatError(ValueError):
    """Raised when a matrix file or buffer cannot be parsed."""


def as_matrix(values, *, copy: bool = True) -> np.ndarray:
    """Validate ``values`` as a finite, non-empty 2-D float64 matrix.

    1-D input is read as a column of scalar support points. The returned
    array is read-only.
    """
    # without a copy, hand back a read-only view so the caller's array keeps its flags
    m = np.array(values, dtype=np.float64) if copy else np.asarray(values, dtype=np.float64).view()
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        bad = int(np.argwhere(~np.isfinite(m))[0, 0])
        raise ValueError(f"row {bad + 1}: non-finite value")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A finitely supported probability measure ``sum_i w_i delta_{x_i}``."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = as_matrix(self.support)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != support.shape[0]:
            raise ValueError(
                f"{weights.shape[0]} weights for {support.shape[0]} support points"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        weights.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def with_support(self, support) -> "DiscreteMeasure":
        return DiscreteMeasure(support, self.weights)

    def __repr__(self):
        return f"DiscreteMeasure(size={self.size}, dim={self.dim})"


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def uniform_measure(m) -> DiscreteMeasure:
    m = as_matrix(m)
    return DiscreteMeasure(m, uniform_weights(m.shape[0]))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int = field(default=0)

    def __post_init__(self):
        features = as_matrix(self.features)
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError("labels must be a vector with one entry per row")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integer class ids")
        labels = labels.astype(np.int64)
        num_classes = self.num_classes or int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= num_classes:
            raise ValueError(f"labels must lie in [0, {num_classes})")
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", num_classes)

    def __len__(self):
        return self.features.shape[0]


# -- serialization ---------------------------------------------------------


def matrix_to_bytes(m) -> bytes:
    m = as_matrix(m, copy=False)
    rows, dim = m.shape
    return _HEADER.pack(WADM_MAGIC, WADM_VERSION, rows, dim) + m.astype("<f8").tobytes()


def matrix_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise MatrixFormatError(f"truncated header: {len(buf)} bytes")
    magic, version, rows, dim = _HEADER.unpack_from(buf)
    if magic != WADM_MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    if version != WADM_VERSION:
        raise MatrixFormatError(f"unsupported WADM version {version}")
    if rows < 1 or dim < 1:
        raise MatrixFormatError(f"invalid dimensions {rows}x{dim}")
    expected = _HEADER.size + 8 * rows * dim
    if len(buf) != expected:
        raise MatrixFormatError(f"payload is {len(buf)} bytes, expected {expected}")
    values = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(rows, dim)
    try:
        return as_matrix(values)
    except ValueError as exc:
        raise MatrixFormatError(str(exc)) from None


def _parse_csv(text: str) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise MatrixFormatError(f"row {lineno}: expected {width} columns, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise MatrixFormatError(f"row {lineno}: cannot parse {line!r}") from None
        if not all(np.isfinite(vals)):
            raise MatrixFormatError(f"row {lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise MatrixFormatError("empty matrix")
    return as_matrix(rows)


def _format_csv(m: np.ndarray) -> str:
    # repr() gives the shortest string that round-trips exactly
    buf = io.StringIO()
    for row in m:
        buf.write(",".join(_fmt(v) for v in row))
        buf.write("\n")
    return buf.getvalue()


def _fmt(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def load_matrix(path: str | os.PathLike, format: Format = "csv") -> np.ndarray:
    path = Path(path)
    if format == "csv":
        return _parse_csv(path.read_text(encoding="utf-8"))
    if format == "binary":
        return matrix_from_bytes(path.read_bytes())
    raise ValueError(f"unknown matrix format {format!r}")


def write_matrix(m, path: str | os.PathLike, format: Format = "csv") -> None:
    m = as_matrix(m, copy=False)
    path = Path(path)
    try:
        if format == "csv":
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_format_csv(m))
        elif format == "binary":
            path.write_bytes(matrix_to_bytes(m))
        else:
            raise ValueError(f"unknown matrix format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write matrix to {path}: {exc}") from exc


def guess_format(path: str | os.PathLike) -> Format:
    """Sniff the WADM magic; anything else is treated as CSV."""
    with open(path, "rb") as fh:
        return "binary" if fh.read(4) == WADM_MAGIC else "csv"
