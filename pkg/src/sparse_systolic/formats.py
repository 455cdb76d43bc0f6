"""Sparse weight formats: encoders, decoders, serialization, footprint model.

Eight storage kinds are covered. Dense, CSR, CSC, COO, RLE-4 and Bitmap
encode a whole matrix. TwoStageBitmap and CSB are tile formats: a matrix is
cut into tiles (edge tiles keep their true, unpadded size) and each tile is
encoded on its own.

Bit widths used by the footprint model (no index widths are fixed by the
hardware, so these are a convention):

=============== ==========================================================
value           32 bit
CSR / CSC       16-bit column (row) index per value, 32-bit pointers
COO             16-bit row + 16-bit column per value
RLE-4           4-bit zero-run code per stored value
Bitmap          one bit per element
TwoStageBitmap  one bit per tile column + one bit per element of each
                non-zero column
CSB             16-bit column index per slot (sentinel slots included)
                + one 32-bit merged-column count per tile
=============== ==========================================================

``footprint_bits`` counts bit arrays as tightly packed. Hardware reads happen
in whole 32-bit words, which ``TwoStageBitmapTile.data_words`` and
``CsbTile.data_words`` account for separately.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .matrix import as_matrix

WORD_BITS = 32
VALUE_BITS = 32
INDEX_BITS = 16
POINTER_BITS = 32
RLE_CODE_BITS = 4
RLE_MAX_RUN = 15
CSB_SENTINEL = -1
DEFAULT_TILE = (8, 8)


class FormatKind(enum.Enum):
    DENSE = "Dense"
    CSR = "CSR"
    CSC = "CSC"
    COO = "COO"
    RLE4 = "RLE4"
    BITMAP = "Bitmap"
    TWO_STAGE_BITMAP = "TwoStageBitmap"
    CSB = "CSB"

    @classmethod
    def parse(cls, name: str) -> "FormatKind":
        key = name.strip().lower().replace("-", "").replace("_", "")
        for kind in cls:
            if kind.value.lower() == key or kind.name.lower().replace("_", "") == key:
                return kind
        raise ValueError(f"unknown format {name!r}; valid: {', '.join(k.value for k in cls)}")

    @property
    def tiled(self) -> bool:
        return self in (FormatKind.TWO_STAGE_BITMAP, FormatKind.CSB)


_FORMAT_CODES = {kind: i for i, kind in enumerate(FormatKind)}


class EncodingError(ValueError):
    """Raised when an encoded stream is inconsistent or malformed."""


def _words(bits: int) -> int:
    return -(-bits // WORD_BITS)


# ---------------------------------------------------------------------------
# Two-stage bitmap


@dataclass(frozen=True)
class TwoStageBitmapTile:
    """Column bit array + element bit array + packed non-zero values.

    ``elem_bitmap`` holds ``rows`` bits for each non-zero column in ascending
    column order; ``values`` follows the same column-major order.
    """

    rows: int
    cols: int
    col_bitmap: np.ndarray
    elem_bitmap: np.ndarray
    values: np.ndarray

    def validate(self) -> None:
        if self.col_bitmap.shape != (self.cols,):
            raise EncodingError(f"column bitmap has {self.col_bitmap.size} bits, expected {self.cols}")
        nzc = int(np.count_nonzero(self.col_bitmap))
        if self.elem_bitmap.shape != (self.rows * nzc,):
            raise EncodingError(
                f"element bitmap has {self.elem_bitmap.size} bits, expected {self.rows * nzc}"
            )
        if int(np.count_nonzero(self.elem_bitmap)) != self.values.size:
            raise EncodingError(
                f"element bitmap popcount {int(np.count_nonzero(self.elem_bitmap))} "
                f"!= {self.values.size} values"
            )
        if nzc and not self.elem_bitmap.reshape(nzc, self.rows).any(axis=1).all():
            raise EncodingError("a column marked non-zero has no element bits set")

    @property
    def nonzero_columns(self) -> np.ndarray:
        return np.flatnonzero(self.col_bitmap)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def column_slices(self):
        """Yield ``(column, row_mask, values)`` for each non-zero column."""
        offset = 0
        for i, col in enumerate(self.nonzero_columns):
            mask = self.elem_bitmap[i * self.rows:(i + 1) * self.rows]
            n = int(np.count_nonzero(mask))
            yield int(col), mask, self.values[offset:offset + n]
            offset += n

    @property
    def metadata_words(self) -> int:
        """32-bit words holding the two bit arrays, each padded separately."""
        return _words(self.cols) + _words(self.elem_bitmap.size)

    @property
    def data_words(self) -> int:
        return self.nnz + self.metadata_words

    def footprint_bits(self) -> int:
        return VALUE_BITS * self.nnz + self.cols + int(self.elem_bitmap.size)


def encode_two_stage_bitmap(tile) -> TwoStageBitmapTile:
    t = as_matrix(tile)
    rows, cols = t.shape
    nz = t != 0
    col_bitmap = nz.any(axis=0)
    cols_idx = np.flatnonzero(col_bitmap)
    sub = nz[:, cols_idx]
    elem_bitmap = sub.T.reshape(-1).copy()
    values = t[:, cols_idx].T[sub.T].astype(np.float32)
    return TwoStageBitmapTile(rows, cols, col_bitmap, elem_bitmap, values)


def decode_two_stage_bitmap(enc: TwoStageBitmapTile) -> np.ndarray:
    enc.validate()
    out = np.zeros((enc.rows, enc.cols), dtype=np.float32)
    for col, mask, vals in enc.column_slices():
        out[mask, col] = vals
    return out


# ---------------------------------------------------------------------------
# CSB


def csb_groups(tile) -> list[list[int]]:
    """First-fit greedy merge of non-zero columns with disjoint supports.

    Columns are scanned in ascending order; each joins the lowest-indexed
    group whose accumulated support it does not overlap, otherwise it opens a
    new group. All-zero columns are skipped.
    """
    t = as_matrix(tile)
    nz = t != 0
    groups: list[list[int]] = []
    masks: list[int] = []
    for col in range(t.shape[1]):
        bits = nz[:, col]
        if not bits.any():
            continue
        support = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
        for gi, gm in enumerate(masks):
            if gm & support == 0:
                groups[gi].append(col)
                masks[gi] = gm | support
                break
        else:
            groups.append([col])
            masks.append(support)
    return groups


@dataclass(frozen=True)
class CsbTile:
    """Merged-column-major slots, ``rows`` per merged column.

    ``col_index[g*rows + r]`` is the original column feeding row ``r`` of
    merged column ``g``, or ``-1`` when that slot holds a zero.
    """

    rows: int
    original_cols: int
    merged_col_count: int
    values: np.ndarray
    col_index: np.ndarray

    def validate(self) -> None:
        n = self.merged_col_count * self.rows
        if self.values.shape != (n,) or self.col_index.shape != (n,):
            raise EncodingError(f"expected {n} slots, got {self.values.size}/{self.col_index.size}")
        idx = self.col_index
        if np.any((idx < CSB_SENTINEL) | (idx >= self.original_cols)):
            raise EncodingError("column index out of range")
        if self.merged_col_count and np.all(idx.reshape(self.merged_col_count, self.rows) == CSB_SENTINEL, axis=1).any():
            raise EncodingError("merged column holds only sentinel slots")
        rows = np.tile(np.arange(self.rows), self.merged_col_count)
        live = idx != CSB_SENTINEL
        pairs = rows[live].astype(np.int64) * max(self.original_cols, 1) + idx[live]
        if np.unique(pairs).size != pairs.size:
            raise EncodingError("duplicate (row, column) assignment")

    def merged_column(self, g: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(g * self.rows, (g + 1) * self.rows)
        return self.values[sl], self.col_index[sl]

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.col_index != CSB_SENTINEL))

    @property
    def index_words_per_column(self) -> int:
        return _words(self.rows * INDEX_BITS)

    @property
    def data_words(self) -> int:
        # count word + live values + packed index words; sentinel values are
        # answered by the decompression unit and never read
        return 1 + self.nnz + self.merged_col_count * self.index_words_per_column

    def footprint_bits(self) -> int:
        return self.merged_col_count * self.rows * (VALUE_BITS + INDEX_BITS) + WORD_BITS


def encode_csb(tile) -> CsbTile:
    t = as_matrix(tile)
    rows, cols = t.shape
    groups = csb_groups(t)
    values = np.zeros(len(groups) * rows, dtype=np.float32)
    index = np.full(len(groups) * rows, CSB_SENTINEL, dtype=np.int32)
    for g, members in enumerate(groups):
        for col in members:
            live = np.flatnonzero(t[:, col])
            values[g * rows + live] = t[live, col]
            index[g * rows + live] = col
    return CsbTile(rows, cols, len(groups), values, index)


def decode_csb(enc: CsbTile) -> np.ndarray:
    enc.validate()
    out = np.zeros((enc.rows, enc.original_cols), dtype=np.float32)
    rows = np.tile(np.arange(enc.rows), enc.merged_col_count)
    live = enc.col_index != CSB_SENTINEL
    out[rows[live], enc.col_index[live]] = enc.values[live]
    return out


# ---------------------------------------------------------------------------
# Whole-matrix formats


@dataclass(frozen=True)
class CsrMatrix:
    rows: int
    cols: int
    values: np.ndarray
    indices: np.ndarray  # column index per value
    pointers: np.ndarray  # rows + 1 entries

    kind = FormatKind.CSR

    def footprint_bits(self) -> int:
        return (VALUE_BITS + INDEX_BITS) * self.values.size + POINTER_BITS * self.pointers.size


@dataclass(frozen=True)
class CscMatrix:
    rows: int
    cols: int
    values: np.ndarray
    indices: np.ndarray  # row index per value
    pointers: np.ndarray  # cols + 1 entries

    kind = FormatKind.CSC

    def footprint_bits(self) -> int:
        return (VALUE_BITS + INDEX_BITS) * self.values.size + POINTER_BITS * self.pointers.size


@dataclass(frozen=True)
class CooMatrix:
    rows: int
    cols: int
    row: np.ndarray
    col: np.ndarray
    values: np.ndarray

    kind = FormatKind.COO

    def footprint_bits(self) -> int:
        return (2 * INDEX_BITS + VALUE_BITS) * self.values.size


@dataclass(frozen=True)
class Rle4Matrix:
    """Row-major stream of ``(code, value)`` pairs.

    Code ``c`` means ``c`` zeros followed by the stored value. A zero run
    longer than 15 is split: code 15 with a stored 0.0 consumes 16 elements
    and the run continues. Zeros after the last pair are implied by the
    matrix size.
    """

    rows: int
    cols: int
    codes: np.ndarray
    values: np.ndarray

    kind = FormatKind.RLE4

    def footprint_bits(self) -> int:
        return (RLE_CODE_BITS + VALUE_BITS) * self.values.size


@dataclass(frozen=True)
class BitmapMatrix:
    rows: int
    cols: int
    bitmap: np.ndarray  # row-major, rows*cols bools
    values: np.ndarray

    kind = FormatKind.BITMAP

    def footprint_bits(self) -> int:
        return VALUE_BITS * self.values.size + self.bitmap.size


@dataclass(frozen=True)
class DenseEncoding:
    rows: int
    cols: int
    values: np.ndarray

    kind = FormatKind.DENSE

    def footprint_bits(self) -> int:
        return VALUE_BITS * self.values.size


@dataclass(frozen=True)
class TiledEncoding:
    """A matrix stored as a row-major grid of TwoStageBitmap or CSB tiles."""

    kind: FormatKind
    rows: int
    cols: int
    tile_rows: int
    tile_cols: int
    tiles: list = field(repr=False)

    @property
    def grid(self) -> tuple[int, int]:
        return -(-self.rows // self.tile_rows), -(-self.cols // self.tile_cols)

    def footprint_bits(self) -> int:
        return sum(t.footprint_bits() for t in self.tiles)


def _check_index_range(rows: int, cols: int) -> None:
    if rows > 1 << INDEX_BITS or cols > 1 << INDEX_BITS:
        raise ValueError(f"{rows}x{cols} exceeds the 16-bit index range")


def encode_csr(m) -> CsrMatrix:
    m = as_matrix(m)
    _check_index_range(*m.shape)
    r, c = np.nonzero(m)
    ptr = np.zeros(m.shape[0] + 1, dtype=np.int64)
    np.add.at(ptr, r + 1, 1)
    return CsrMatrix(m.shape[0], m.shape[1], m[r, c].copy(), c.astype(np.int64), np.cumsum(ptr))


def encode_csc(m) -> CscMatrix:
    m = as_matrix(m)
    _check_index_range(*m.shape)
    c, r = np.nonzero(m.T)
    ptr = np.zeros(m.shape[1] + 1, dtype=np.int64)
    np.add.at(ptr, c + 1, 1)
    return CscMatrix(m.shape[0], m.shape[1], m[r, c].copy(), r.astype(np.int64), np.cumsum(ptr))


def encode_coo(m) -> CooMatrix:
    m = as_matrix(m)
    _check_index_range(*m.shape)
    r, c = np.nonzero(m)
    return CooMatrix(m.shape[0], m.shape[1], r.astype(np.int64), c.astype(np.int64), m[r, c].copy())


def encode_rle4(m) -> Rle4Matrix:
    m = as_matrix(m)
    flat = m.reshape(-1)
    codes: list[int] = []
    values: list[float] = []
    prev = -1
    for pos in np.flatnonzero(flat):
        run = int(pos) - prev - 1
        while run > RLE_MAX_RUN:
            codes.append(RLE_MAX_RUN)
            values.append(0.0)
            run -= RLE_MAX_RUN + 1
        codes.append(run)
        values.append(flat[pos])
        prev = int(pos)
    return Rle4Matrix(
        m.shape[0], m.shape[1], np.array(codes, dtype=np.uint8), np.array(values, dtype=np.float32)
    )


def encode_bitmap(m) -> BitmapMatrix:
    m = as_matrix(m)
    flat = m.reshape(-1)
    bits = flat != 0
    return BitmapMatrix(m.shape[0], m.shape[1], bits, flat[bits].copy())


def _tile_slices(rows: int, cols: int, tile_rows: int, tile_cols: int):
    for r0 in range(0, rows, tile_rows):
        for c0 in range(0, cols, tile_cols):
            yield slice(r0, min(r0 + tile_rows, rows)), slice(c0, min(c0 + tile_cols, cols))


def encode_tiled(m, kind: FormatKind, tile: tuple[int, int] = DEFAULT_TILE) -> TiledEncoding:
    m = as_matrix(m)
    tr, tc = tile
    if tr < 1 or tc < 1:
        raise ValueError("tile dims must be >= 1")
    enc = {FormatKind.TWO_STAGE_BITMAP: encode_two_stage_bitmap, FormatKind.CSB: encode_csb}[kind]
    tiles = [enc(m[rs, cs]) for rs, cs in _tile_slices(*m.shape, tr, tc)]
    return TiledEncoding(kind, m.shape[0], m.shape[1], tr, tc, tiles)


def encode(m, fmt: FormatKind, tile: tuple[int, int] = DEFAULT_TILE):
    """Encode ``m`` in any of the eight kinds."""
    if fmt.tiled:
        return encode_tiled(m, fmt, tile)
    return {
        FormatKind.DENSE: lambda a: DenseEncoding(a.shape[0], a.shape[1], a.reshape(-1).copy()),
        FormatKind.CSR: encode_csr,
        FormatKind.CSC: encode_csc,
        FormatKind.COO: encode_coo,
        FormatKind.RLE4: encode_rle4,
        FormatKind.BITMAP: encode_bitmap,
    }[fmt](as_matrix(m))


def decode(enc) -> np.ndarray:
    """Inverse of :func:`encode` for every encoding object."""
    if isinstance(enc, TwoStageBitmapTile):
        return decode_two_stage_bitmap(enc)
    if isinstance(enc, CsbTile):
        return decode_csb(enc)
    rows, cols = enc.rows, enc.cols
    if isinstance(enc, DenseEncoding):
        if enc.values.size != rows * cols:
            raise EncodingError("dense payload size mismatch")
        return enc.values.reshape(rows, cols).astype(np.float32)
    if isinstance(enc, (CsrMatrix, CscMatrix)):
        outer = rows if isinstance(enc, CsrMatrix) else cols
        inner = cols if isinstance(enc, CsrMatrix) else rows
        ptr = np.asarray(enc.pointers)
        if ptr.size != outer + 1 or ptr[0] != 0 or ptr[-1] != enc.values.size or np.any(np.diff(ptr) < 0):
            raise EncodingError("malformed pointer array")
        if enc.indices.size != enc.values.size:
            raise EncodingError("index/value length mismatch")
        if enc.indices.size and (enc.indices.min() < 0 or enc.indices.max() >= inner):
            raise EncodingError("index out of range")
        major = np.repeat(np.arange(outer), np.diff(ptr))
        out = np.zeros((rows, cols), dtype=np.float32)
        if isinstance(enc, CsrMatrix):
            out[major, enc.indices] = enc.values
        else:
            out[enc.indices, major] = enc.values
        return out
    if isinstance(enc, CooMatrix):
        if not (enc.row.size == enc.col.size == enc.values.size):
            raise EncodingError("COO arrays differ in length")
        if enc.values.size and (
            enc.row.min() < 0 or enc.row.max() >= rows or enc.col.min() < 0 or enc.col.max() >= cols
        ):
            raise EncodingError("COO coordinate out of range")
        out = np.zeros((rows, cols), dtype=np.float32)
        out[enc.row, enc.col] = enc.values
        return out
    if isinstance(enc, Rle4Matrix):
        if enc.codes.size != enc.values.size:
            raise EncodingError("RLE-4 code/value length mismatch")
        flat = np.zeros(rows * cols, dtype=np.float32)
        pos = 0
        for code, val in zip(enc.codes.tolist(), enc.values.tolist()):
            if not 0 <= code <= RLE_MAX_RUN:
                raise EncodingError(f"RLE-4 code {code} outside 0..15")
            pos += code
            if pos >= flat.size:
                raise EncodingError("RLE-4 stream runs past the matrix end")
            flat[pos] = val
            pos += 1
        return flat.reshape(rows, cols)
    if isinstance(enc, BitmapMatrix):
        if enc.bitmap.size != rows * cols or int(np.count_nonzero(enc.bitmap)) != enc.values.size:
            raise EncodingError("bitmap popcount does not match value count")
        flat = np.zeros(rows * cols, dtype=np.float32)
        flat[enc.bitmap.astype(bool)] = enc.values
        return flat.reshape(rows, cols)
    if isinstance(enc, TiledEncoding):
        out = np.zeros((rows, cols), dtype=np.float32)
        slices = list(_tile_slices(rows, cols, enc.tile_rows, enc.tile_cols))
        if len(slices) != len(enc.tiles):
            raise EncodingError(f"expected {len(slices)} tiles, got {len(enc.tiles)}")
        for (rs, cs), t in zip(slices, enc.tiles):
            block = decode(t)
            if block.shape != out[rs, cs].shape:
                raise EncodingError("tile shape does not match the grid")
            out[rs, cs] = block
        return out
    raise TypeError(f"not an encoding: {type(enc).__name__}")


# ---------------------------------------------------------------------------
# Closed-form footprint


def _rle4_entries(m: np.ndarray) -> int:
    pos = np.flatnonzero(m.reshape(-1))
    if pos.size == 0:
        return 0
    runs = np.diff(np.concatenate(([-1], pos))) - 1
    return int(pos.size + np.sum(runs // (RLE_MAX_RUN + 1)))


def footprint_bits(m, fmt: FormatKind, tile: tuple[int, int] = DEFAULT_TILE) -> int:
    """Storage size of ``m`` in ``fmt``, evaluated from matrix statistics.

    This does not run the encoders; tests compare the two routes.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    nnz = int(np.count_nonzero(m))
    if fmt is FormatKind.DENSE:
        return rows * cols * VALUE_BITS
    if fmt is FormatKind.CSR:
        return nnz * (VALUE_BITS + INDEX_BITS) + (rows + 1) * POINTER_BITS
    if fmt is FormatKind.CSC:
        return nnz * (VALUE_BITS + INDEX_BITS) + (cols + 1) * POINTER_BITS
    if fmt is FormatKind.COO:
        return nnz * (VALUE_BITS + 2 * INDEX_BITS)
    if fmt is FormatKind.RLE4:
        return _rle4_entries(m) * (VALUE_BITS + RLE_CODE_BITS)
    if fmt is FormatKind.BITMAP:
        return nnz * VALUE_BITS + rows * cols
    tr, tc = tile
    total = 0
    for rs, cs in _tile_slices(rows, cols, tr, tc):
        t = m[rs, cs]
        if fmt is FormatKind.TWO_STAGE_BITMAP:
            nzc = int(np.count_nonzero((t != 0).any(axis=0)))
            total += int(np.count_nonzero(t)) * VALUE_BITS + t.shape[1] + t.shape[0] * nzc
        else:
            total += len(csb_groups(t)) * t.shape[0] * (VALUE_BITS + INDEX_BITS) + WORD_BITS
    return total


def zero_column_probability(s: float, n: int) -> float:
    """Chance that a length-``n`` column of i.i.d. zeros at rate ``s`` is all zero."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return s ** n


# ---------------------------------------------------------------------------
# Byte serialization (layout documented in docs/formats.md)

_CONTAINER = struct.Struct("<4sBBQQ")
ENCODING_MAGIC = b"FSEN"
ENCODING_VERSION = 1


def _pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=bool), bitorder="little").tobytes()


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise EncodingError("truncated encoding payload")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype).copy()

    def bits(self, count: int) -> np.ndarray:
        raw = np.frombuffer(self.take(-(-count // 8)), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=count).astype(bool)


def _tile_payload(t) -> bytes:
    if isinstance(t, TwoStageBitmapTile):
        return b"".join((
            struct.pack("<I", t.nnz),
            _pack_bits(t.col_bitmap),
            _pack_bits(t.elem_bitmap),
            t.values.astype("<f4").tobytes(),
        ))
    return b"".join((
        struct.pack("<I", t.merged_col_count),
        t.values.astype("<f4").tobytes(),
        t.col_index.astype("<i2").tobytes(),
    ))


def to_bytes(enc) -> bytes:
    kind = enc.kind
    head = _CONTAINER.pack(ENCODING_MAGIC, ENCODING_VERSION, _FORMAT_CODES[kind], enc.rows, enc.cols)
    if isinstance(enc, DenseEncoding):
        body = enc.values.astype("<f4").tobytes()
    elif isinstance(enc, (CsrMatrix, CscMatrix)):
        body = b"".join((
            struct.pack("<I", enc.values.size),
            enc.values.astype("<f4").tobytes(),
            enc.indices.astype("<u2").tobytes(),
            enc.pointers.astype("<u4").tobytes(),
        ))
    elif isinstance(enc, CooMatrix):
        rec = np.zeros(enc.values.size, dtype=[("r", "<u2"), ("c", "<u2"), ("v", "<f4")])
        rec["r"], rec["c"], rec["v"] = enc.row, enc.col, enc.values
        body = struct.pack("<I", enc.values.size) + rec.tobytes()
    elif isinstance(enc, Rle4Matrix):
        codes = np.zeros(enc.codes.size + (enc.codes.size & 1), dtype=np.uint8)
        codes[: enc.codes.size] = enc.codes
        packed = (codes[0::2] | (codes[1::2] << 4)).astype(np.uint8)
        body = struct.pack("<I", enc.codes.size) + packed.tobytes() + enc.values.astype("<f4").tobytes()
    elif isinstance(enc, BitmapMatrix):
        body = struct.pack("<I", enc.values.size) + _pack_bits(enc.bitmap) + enc.values.astype("<f4").tobytes()
    elif isinstance(enc, TiledEncoding):
        body = struct.pack("<II", enc.tile_rows, enc.tile_cols) + b"".join(_tile_payload(t) for t in enc.tiles)
    else:
        raise TypeError(f"cannot serialize {type(enc).__name__}")
    return head + body


def from_bytes(data: bytes):
    if len(data) < _CONTAINER.size:
        raise EncodingError("encoding shorter than its header")
    magic, version, code, rows, cols = _CONTAINER.unpack_from(data)
    if magic != ENCODING_MAGIC:
        raise EncodingError(f"bad magic {magic!r}")
    if version != ENCODING_VERSION:
        raise EncodingError(f"unsupported encoding version {version}")
    kinds = list(FormatKind)
    if code >= len(kinds):
        raise EncodingError(f"unknown format code {code}")
    kind = kinds[code]
    if rows < 1 or cols < 1:
        raise EncodingError(f"invalid dims {rows}x{cols}")
    rd = _Reader(data, _CONTAINER.size)
    if kind is FormatKind.DENSE:
        enc = DenseEncoding(rows, cols, rd.array("<f4", rows * cols).astype(np.float32))
    elif kind in (FormatKind.CSR, FormatKind.CSC):
        nnz = rd.u32()
        vals = rd.array("<f4", nnz).astype(np.float32)
        idx = rd.array("<u2", nnz).astype(np.int64)
        outer = rows if kind is FormatKind.CSR else cols
        ptr = rd.array("<u4", outer + 1).astype(np.int64)
        enc = (CsrMatrix if kind is FormatKind.CSR else CscMatrix)(rows, cols, vals, idx, ptr)
    elif kind is FormatKind.COO:
        nnz = rd.u32()
        rec = np.frombuffer(rd.take(8 * nnz), dtype=[("r", "<u2"), ("c", "<u2"), ("v", "<f4")])
        enc = CooMatrix(rows, cols, rec["r"].astype(np.int64), rec["c"].astype(np.int64),
                        rec["v"].astype(np.float32))
    elif kind is FormatKind.RLE4:
        n = rd.u32()
        packed = rd.array("<u1", -(-n // 2))
        codes = np.empty(packed.size * 2, dtype=np.uint8)
        codes[0::2], codes[1::2] = packed & 0x0F, packed >> 4
        enc = Rle4Matrix(rows, cols, codes[:n], rd.array("<f4", n).astype(np.float32))
    elif kind is FormatKind.BITMAP:
        nnz = rd.u32()
        bits = rd.bits(rows * cols)
        enc = BitmapMatrix(rows, cols, bits, rd.array("<f4", nnz).astype(np.float32))
    else:
        tr, tc = struct.unpack("<II", rd.take(8))
        if tr < 1 or tc < 1:
            raise EncodingError("tile dims must be >= 1")
        tiles = []
        for rs, cs in _tile_slices(rows, cols, tr, tc):
            h, w = rs.stop - rs.start, cs.stop - cs.start
            if kind is FormatKind.TWO_STAGE_BITMAP:
                nnz = rd.u32()
                colbits = rd.bits(w)
                elem = rd.bits(h * int(np.count_nonzero(colbits)))
                tiles.append(TwoStageBitmapTile(h, w, colbits, elem, rd.array("<f4", nnz).astype(np.float32)))
            else:
                g = rd.u32()
                vals = rd.array("<f4", g * h).astype(np.float32)
                tiles.append(CsbTile(h, w, g, vals, rd.array("<i2", g * h).astype(np.int32)))
        enc = TiledEncoding(kind, rows, cols, tr, tc, tiles)
    if rd.pos != len(data):
        raise EncodingError(f"{len(data) - rd.pos} trailing bytes after payload")
    return enc
