"""Dense matrix helpers shared by every other module.

Matrices are plain 2-D ``numpy.float32`` arrays in row-major (C) order. The
helpers here validate that shape, provide the 64-bit reference GEMM used as
the correctness oracle, the seeded sparse generator, and FSMX/CSV file I/O.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .rng import Xoshiro256

FSMX_MAGIC = b"FSMX"
FSMX_VERSION = 1
_HEADER = struct.Struct("<4sBQQ")
# Refuse to allocate anything larger than this many elements from a file header.
MAX_ELEMENTS = 1 << 31


class MatrixFormatError(ValueError):
    """Raised for malformed or truncated matrix files."""


def as_matrix(a, *, copy: bool = False) -> np.ndarray:
    """Coerce ``a`` to a C-contiguous 2-D float32 array with both dims >= 1."""
    if copy:
        m = np.array(a, dtype=np.float32, order="C", ndmin=2)
    else:
        m = np.ascontiguousarray(a, dtype=np.float32)
        if m.ndim < 2:
            m = m.reshape(1, -1) if m.ndim == 1 else m.reshape(1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {m.ndim} dims")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix dims must be >= 1, got {m.shape}")
    return m


def gemm_ref(w, x) -> np.ndarray:
    """Reference ``w @ x``: 64-bit accumulation, rounded once to 32-bit."""
    w = as_matrix(w)
    x = as_matrix(x)
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {w.shape} x {x.shape}")
    return (w.astype(np.float64) @ x.astype(np.float64)).astype(np.float32)


def random_sparse(rows: int, cols: int, sparsity: float, seed: int) -> np.ndarray:
    """Matrix whose elements are zero independently with probability ``sparsity``.

    Non-zeros are uniform on [-1, 1] with exact zero excluded. The element
    stream is row-major; each element consumes one draw for the zero test and
    one or more draws for its value, so output depends only on ``seed``.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {sparsity}")
    rng = Xoshiro256(seed)
    nf = rng.next_float
    out = np.zeros(rows * cols, dtype=np.float32)
    f32 = np.float32
    for i in range(rows * cols):
        if nf() < sparsity:
            continue
        v = f32(2.0 * nf() - 1.0)
        while v == 0:
            v = f32(2.0 * nf() - 1.0)
        out[i] = v
    return out.reshape(rows, cols)


def measure_sparsity(m) -> float:
    """Fraction of elements that are exactly zero."""
    m = as_matrix(m)
    return float(np.count_nonzero(m == 0)) / m.size


def store_matrix(m, path) -> None:
    m = as_matrix(m)
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FSMX_MAGIC, FSMX_VERSION, rows, cols))
        fh.write(m.astype("<f4", copy=False).tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    return matrix_from_bytes(data)


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise MatrixFormatError("file shorter than the FSMX header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != FSMX_MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}, expected {FSMX_MAGIC!r}")
    if version != FSMX_VERSION:
        raise MatrixFormatError(f"unsupported FSMX version {version}")
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"invalid dims {rows}x{cols}")
    if rows * cols > MAX_ELEMENTS:
        raise MatrixFormatError(f"dims {rows}x{cols} overflow the element limit")
    payload = data[_HEADER.size:]
    need = rows * cols * 4
    if len(payload) < need:
        raise MatrixFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise MatrixFormatError(f"{len(payload) - need} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return arr.reshape(rows, cols)


def store_csv(m, path) -> None:
    m = as_matrix(m)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in m:
            # repr of a float32 widened to float64 round-trips exactly
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise MatrixFormatError("empty CSV matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MatrixFormatError("ragged CSV matrix")
    try:
        return as_matrix([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise MatrixFormatError(str(exc)) from exc
