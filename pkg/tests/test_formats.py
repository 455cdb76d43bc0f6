import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sparse_systolic.formats import (
    CSB_SENTINEL,
    EncodingError,
    FormatKind,
    TwoStageBitmapTile,
    csb_groups,
    decode,
    decode_csb,
    decode_two_stage_bitmap,
    encode,
    encode_csb,
    encode_csr,
    encode_rle4,
    encode_two_stage_bitmap,
    footprint_bits,
    from_bytes,
    to_bytes,
    zero_column_probability,
)
from sparse_systolic.matrix import random_sparse

ALL = list(FormatKind)
SPARSE = [k for k in ALL if k is not FormatKind.DENSE]


def sparse_matrices(max_dim=12):
    """Float32 matrices with many exact zeros and a few special values."""
    elems = st.one_of(st.just(0.0), st.just(0.0), st.just(-0.5),
                      st.floats(-4, 4, width=32, allow_nan=False))
    return st.tuples(st.integers(1, max_dim), st.integers(1, max_dim)).flatmap(
        lambda s: arrays(np.float32, s, elements=elems))


# ---------------------------------------------------------------------------
# two-stage bitmap


def test_two_stage_seven_word_example():
    t = np.array([[1, 0, 0, 2], [3, 0, 0, 4], [0, 0, 0, 5]], np.float32)
    enc = encode_two_stage_bitmap(t)
    assert enc.col_bitmap.tolist() == [True, False, False, True]
    assert enc.elem_bitmap.size == 6 and enc.nnz == 5
    assert enc.data_words == 7
    assert enc.values.tolist() == [1, 3, 2, 4, 5]  # column-major over live columns
    assert np.array_equal(decode_two_stage_bitmap(enc), t)


def test_two_stage_all_zero():
    enc = encode_two_stage_bitmap(np.zeros((4, 5)))
    assert not enc.col_bitmap.any() and enc.nnz == 0 and enc.elem_bitmap.size == 0
    assert not decode_two_stage_bitmap(enc).any()


@pytest.mark.parametrize("s", [0.0, 0.5, 0.9, 1.0])
def test_two_stage_round_trip_8x8(s):
    for seed in range(25):
        t = random_sparse(8, 8, s, seed)
        assert np.array_equal(decode_two_stage_bitmap(encode_two_stage_bitmap(t)), t)


def test_two_stage_popcount_mismatch():
    enc = encode_two_stage_bitmap(np.eye(3, dtype=np.float32))
    bad = TwoStageBitmapTile(enc.rows, enc.cols, enc.col_bitmap, enc.elem_bitmap, enc.values[:-1])
    with pytest.raises(EncodingError):
        decode_two_stage_bitmap(bad)


# ---------------------------------------------------------------------------
# CSB


def _supports(t):
    return [frozenset(np.flatnonzero(t[:, c])) for c in range(t.shape[1])]


def test_csb_merges_disjoint_pair():
    t = np.array([[1, 0], [2, 0], [0, 3]], np.float32)
    enc = encode_csb(t)
    assert enc.merged_col_count == 1
    assert enc.col_index.tolist() == [0, 0, 1]
    assert np.array_equal(decode_csb(enc), t)


def test_csb_dense_tile_does_not_merge():
    t = random_sparse(5, 6, 0.0, 3)
    assert encode_csb(t).merged_col_count == 6


def test_csb_all_zero_tile():
    enc = encode_csb(np.zeros((4, 4)))
    assert enc.merged_col_count == 0 and enc.values.size == 0
    assert not decode_csb(enc).any()


def test_csb_streams_fewer_columns_than_two_stage():
    # the csOS walk-through tile: columns 1 and 2 share no row
    t = np.array([[1, 2, 0, 0], [3, 0, 4, 0], [0, 5, 0, 0]], np.float32)
    assert encode_csb(t).merged_col_count == 2
    assert encode_two_stage_bitmap(t).nonzero_columns.size == 3


def test_csb_round_trip_and_structure_200_tiles():
    for seed in range(200):
        s = 0.7 + 0.25 * (seed % 6) / 5
        t = random_sparse(8, 8, s, 1000 + seed)
        enc = encode_csb(t)
        assert np.array_equal(decode_csb(enc), t)
        supp = _supports(t)
        groups = csb_groups(t)
        live = [c for c in range(8) if supp[c]]
        assert sorted(c for g in groups for c in g) == live
        assert enc.merged_col_count <= len(live)
        for g in groups:
            for a, b in itertools.combinations(g, 2):
                assert not supp[a] & supp[b]
        # no merged column is all sentinels
        idx = enc.col_index.reshape(enc.merged_col_count, 8) if enc.merged_col_count else np.zeros((0, 8))
        assert all((row != CSB_SENTINEL).any() for row in idx)


def first_fit_oracle(t):
    """Brute restatement of first-fit over Python sets."""
    groups, used = [], []
    for c, s in enumerate(_supports(t)):
        if not s:
            continue
        for g, u in zip(groups, used):
            if not u & s:
                g.append(c)
                u |= s
                break
        else:
            groups.append([c])
            used.append(set(s))
    return groups


@given(sparse_matrices(10))
def test_csb_first_fit_matches_oracle(t):
    assert csb_groups(t) == first_fit_oracle(t)


@given(sparse_matrices(8))
def test_csb_count_equals_live_when_no_disjoint_pair(t):
    supp = [s for s in _supports(t) if s]
    if all(a & b for a, b in itertools.combinations(supp, 2)):
        assert encode_csb(t).merged_col_count == len(supp)


def test_csb_decoder_rejects_bad_index():
    enc = encode_csb(np.array([[1, 0], [0, 2]], np.float32))
    idx = enc.col_index.copy()
    idx[0] = 9
    with pytest.raises(EncodingError):
        decode_csb(type(enc)(enc.rows, enc.original_cols, enc.merged_col_count, enc.values, idx))


def test_csb_decoder_rejects_duplicate_slot():
    # two merged columns both claim (row 0, col 0)
    enc = encode_csb(np.eye(2, dtype=np.float32))
    bad = type(enc)(2, 2, 2, np.array([1, 0, 1, 2], np.float32), np.array([0, -1, 0, 1], np.int32))
    with pytest.raises(EncodingError):
        decode_csb(bad)


# ---------------------------------------------------------------------------
# whole-matrix formats


def test_csr_identity():
    enc = encode_csr(np.eye(3))
    assert enc.values.tolist() == [1, 1, 1]
    assert enc.indices.tolist() == [0, 1, 2]
    assert enc.pointers.tolist() == [0, 1, 2, 3]


def test_rle4_saturating_run():
    m = np.zeros((1, 22), np.float32)
    m[0, 20] = 7.0
    enc = encode_rle4(m)
    # 15-code with a stored zero covers 16 elements, then 4 more zeros
    assert enc.codes.tolist() == [15, 4]
    assert enc.values.tolist() == [0.0, 7.0]
    assert np.array_equal(decode(enc), m)


def test_rle4_exact_boundary_runs():
    for run in (15, 16, 31, 32, 33):
        m = np.zeros((1, run + 1), np.float32)
        m[0, run] = 1.0
        enc = encode_rle4(m)
        assert enc.codes.size == 1 + run // 16
        assert np.array_equal(decode(enc), m)


@settings(max_examples=1000)
@given(sparse_matrices(), st.sampled_from(ALL), st.integers(1, 5), st.integers(1, 5))
def test_round_trip_every_format(m, fmt, tr, tc):
    enc = encode(m, fmt, (tr, tc))
    back = decode(enc)
    assert back.tobytes() == m.tobytes() or np.array_equal(back, m)
    blob = to_bytes(enc)
    again = from_bytes(blob)
    assert decode(again).tobytes() == back.tobytes()
    assert to_bytes(again) == blob
    # the closed form and the encoder agree
    assert enc.footprint_bits() == footprint_bits(m, fmt, (tr, tc))


@given(sparse_matrices(8), st.sampled_from(ALL))
def test_truncated_stream_rejected(m, fmt):
    blob = to_bytes(encode(m, fmt, (3, 3)))
    for cut in (1, len(blob) // 2):
        with pytest.raises(EncodingError):
            from_bytes(blob[:-cut])
    with pytest.raises(EncodingError):
        from_bytes(blob + b"\0")
    with pytest.raises(EncodingError):
        from_bytes(b"NOPE" + blob[4:])


# ---------------------------------------------------------------------------
# footprint


def manual_footprint(m, fmt, tile=(8, 8)):
    """Element-by-element recount, independent of the library's closed forms."""
    rows, cols = m.shape
    nnz = sum(1 for v in m.flat if v != 0)
    if fmt is FormatKind.DENSE:
        return 32 * rows * cols
    if fmt is FormatKind.CSR:
        return 48 * nnz + 32 * (rows + 1)
    if fmt is FormatKind.CSC:
        return 48 * nnz + 32 * (cols + 1)
    if fmt is FormatKind.COO:
        return 64 * nnz
    if fmt is FormatKind.BITMAP:
        return 32 * nnz + rows * cols
    if fmt is FormatKind.RLE4:
        entries, run = 0, 0
        for v in m.flat:
            if v == 0:
                run += 1
                continue
            entries += 1 + run // 16
            run = 0
        return 36 * entries
    total = 0
    for r0 in range(0, rows, tile[0]):
        for c0 in range(0, cols, tile[1]):
            t = m[r0:r0 + tile[0], c0:c0 + tile[1]]
            h, w = t.shape
            if fmt is FormatKind.TWO_STAGE_BITMAP:
                live = sum(1 for c in range(w) if t[:, c].any())
                total += 32 * int(np.count_nonzero(t)) + w + h * live
            else:
                total += 48 * h * len(first_fit_oracle(t)) + 32
    return total


@pytest.mark.parametrize("fmt", ALL)
def test_footprint_matches_manual_count(fmt):
    for seed, s in enumerate((0.0, 0.3, 0.8, 0.97, 1.0)):
        m = random_sparse(13, 21, s, seed)
        assert footprint_bits(m, fmt) == manual_footprint(m, fmt)


def test_dense_and_bitmap_identities():
    m = random_sparse(128, 512, 0.9, 5)
    assert footprint_bits(m, FormatKind.DENSE) == 2_097_152
    assert footprint_bits(m, FormatKind.BITMAP) == 32 * np.count_nonzero(m) + 128 * 512


def test_ordering_at_sparsity_0_9():
    m = random_sparse(128, 512, 0.9, 11)
    fp = {k: footprint_bits(m, k) for k in ALL}
    assert fp[FormatKind.TWO_STAGE_BITMAP] < fp[FormatKind.BITMAP] < fp[FormatKind.DENSE]
    assert fp[FormatKind.COO] > fp[FormatKind.CSR]


@given(sparse_matrices(32))
def test_two_stage_vs_bitmap_per_tile(m):
    # one tile no wider than a word: column-bitmap overhead fits in 32 bits
    tile = m.shape
    assert footprint_bits(m, FormatKind.TWO_STAGE_BITMAP, tile) <= footprint_bits(m, FormatKind.BITMAP) + 32


@given(sparse_matrices(20), st.integers(1, 6), st.integers(1, 6))
def test_two_stage_vs_bitmap_tiled(m, tr, tc):
    rows, cols = m.shape
    widths = math.ceil(rows / tr) * cols  # sum of tile widths over the grid
    assert footprint_bits(m, FormatKind.TWO_STAGE_BITMAP, (tr, tc)) <= footprint_bits(m, FormatKind.BITMAP) + widths


@pytest.mark.parametrize("fmt", SPARSE)
def test_dense_input_never_compresses(fmt):
    m = random_sparse(16, 24, 0.0, 9)
    assert footprint_bits(m, fmt) >= footprint_bits(m, FormatKind.DENSE)


# ---------------------------------------------------------------------------
# zero-column probability


def test_zero_column_probability_values():
    assert zero_column_probability(1.0, 7) == 1.0
    assert zero_column_probability(0.9, 1) == 0.9
    assert zero_column_probability(0.9, 16) == pytest.approx(0.1853, abs=1e-4)
    with pytest.raises(ValueError):
        zero_column_probability(1.5, 2)
    with pytest.raises(ValueError):
        zero_column_probability(0.5, 0)


def test_zero_column_fraction_converges():
    s, n, cols = 0.8, 4, 4000
    m = random_sparse(n, cols, s, 77)
    frac = float(np.mean(~m.any(axis=0)))
    p = zero_column_probability(s, n)
    assert abs(frac - p) <= 4 * math.sqrt(p * (1 - p) / cols)
