"""Matrix validation and on-disk formats shared by every module.

Matrices are plain 2-D ``float64`` numpy arrays. Two file formats are
supported:

* ``binary``: magic ``b"FMAT"``, version ``u16 = 1``, rows ``u64``,
  cols ``u64``, then row-major little-endian IEEE-754 doubles.
* ``csv``: one row per line, comma separated, 17 significant digits so
  every double survives a round trip.

Label vectors use one integer per line.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

MAGIC = b"FMAT"
VERSION = 1
_HEADER = struct.Struct("<4sHQQ")

PathLike = Union[str, Path]


class MatrixError(ValueError):
    """A matrix or label vector violates its invariants."""


class FormatError(ValueError):
    """A file could not be parsed."""


def validate_matrix(
    m: np.ndarray, rows: Optional[int] = None, cols: Optional[int] = None
) -> None:
    """Raise ``MatrixError`` unless ``m`` is a finite non-empty 2-D matrix.

    ``rows``/``cols`` optionally pin the expected shape.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise MatrixError(f"expected a 2-D matrix, got {m.ndim} dimension(s)")
    n, d = m.shape
    if n < 1 or d < 1:
        raise MatrixError(f"matrix must be at least 1x1, got {n}x{d}")
    if rows is not None and n != rows:
        raise MatrixError(f"dimension mismatch: expected {rows} rows, got {n}")
    if cols is not None and d != cols:
        raise MatrixError(f"dimension mismatch: expected {cols} cols, got {d}")
    if not np.issubdtype(m.dtype, np.number) or np.iscomplexobj(m):
        raise MatrixError(f"matrix must be real-valued, got dtype {m.dtype}")
    bad = ~np.isfinite(m)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise MatrixError(f"non-finite value {m[r, c]} at ({r}, {c})")


def as_matrix(
    data, rows: Optional[int] = None, cols: Optional[int] = None
) -> np.ndarray:
    """Build a validated float64 matrix.

    With both ``rows`` and ``cols`` given, ``data`` may be flat and must
    hold exactly ``rows * cols`` values.
    """
    arr = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None and arr.ndim == 1:
        if arr.size != rows * cols:
            raise MatrixError(
                f"dimension mismatch: {rows}x{cols} needs {rows * cols} values, "
                f"got {arr.size}"
            )
        arr = arr.reshape(rows, cols)
    validate_matrix(arr, rows, cols)
    return arr


def validate_labels(y: np.ndarray, n: Optional[int] = None, k: Optional[int] = None) -> None:
    y = np.asarray(y)
    if y.ndim != 1:
        raise MatrixError(f"labels must be 1-D, got {y.ndim} dimension(s)")
    if not np.issubdtype(y.dtype, np.integer):
        raise MatrixError(f"labels must be integers, got dtype {y.dtype}")
    if n is not None and y.shape[0] != n:
        raise MatrixError(f"label count {y.shape[0]} does not match {n} rows")
    if y.size and y.min() < 0:
        raise MatrixError(f"negative label {y.min()}")
    if k is not None and y.size and y.max() >= k:
        raise MatrixError(f"label {y.max()} out of range for {k} classes")


def _infer_format(path: Path, fmt: Optional[str]) -> str:
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown matrix format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() in (".csv", ".txt") else "binary"


def write_matrix(m: np.ndarray, path: PathLike, fmt: Optional[str] = None) -> None:
    """Write ``m``; the format defaults to csv for ``.csv``/``.txt`` paths, else binary."""
    path = Path(path)
    m = as_matrix(m)
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        n, d = m.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            for row in m:
                fh.write(",".join(format(float(v), ".17g") for v in row))
                fh.write("\n")


def read_matrix(path: PathLike, fmt: Optional[str] = None, header: bool = False) -> np.ndarray:
    """Read a matrix written by ``write_matrix`` (or any headerless numeric CSV).

    ``header=True`` skips the first CSV line.
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        return _read_binary(path)
    return _read_csv(path, header)


def _read_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    expected = _HEADER.size + 8 * n * d
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes for {n}x{d}, "
            f"got {len(raw)}"
        )
    m = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return as_matrix(m, n, d)


def _read_csv(path: Path, header: bool) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} fields, got {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    try:
        return as_matrix(rows)
    except MatrixError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_labels(y: Sequence[int], path: PathLike) -> None:
    y = np.asarray(y)
    validate_labels(y)
    Path(path).write_text("".join(f"{int(v)}\n" for v in y))


def read_labels(path: PathLike) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    y = np.asarray(out, dtype=np.int64)
    validate_labels(y)
    return y
