import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import scaled_error
from sparse_systolic.lowering import OperatorSpec
from sparse_systolic.matrix import gemm_ref, random_sparse
from sparse_systolic.sim import (
    ArchConfig,
    Dataflow,
    SimResult,
    best_dataflow,
    csos_injections,
    pick_fastest,
    simulate_gemm,
    simulate_operator,
)

FLOWS = list(Dataflow)
SPARSE_FLOWS = [d for d in FLOWS if d.sparse]
DENSE_FLOWS = [d for d in FLOWS if not d.sparse]

# walk-through tiles on a 3-row x 2-column array
A, B, C, D, E = 1.0, 2.0, 3.0, 4.0, 5.0
W_SKIP = np.array([[A, 0, 0, B], [C, 0, 0, D], [0, 0, 0, E]], np.float32)
X_WALK = np.arange(1, 9, dtype=np.float32).reshape(4, 2)
W_MERGE = np.array([[A, B, 0, 0], [C, 0, D, 0], [0, E, 0, 0]], np.float32)
WALK_ARCH = ArchConfig(3, 2, tile_k=4)


def _spans(total, size):
    return [min(size, total - s) for s in range(0, total, size)]


# ---------------------------------------------------------------------------
# configuration


def test_arch_validation():
    with pytest.raises(ValueError):
        ArchConfig(1, 4)
    with pytest.raises(ValueError):
        ArchConfig(2, 2, regfile_size=8)
    a = ArchConfig.from_dict({"pe_rows": 4, "pe_cols": 3, "mem_ports": 2})
    assert (a.words_per_cycle, a.depth, a.pe_count) == (2, 4, 12)
    with pytest.raises((ValueError, TypeError)):
        ArchConfig.from_dict({"pe_rows": 4, "pe_cols": 3, "bogus": 1})


def test_dataflow_parse():
    assert Dataflow.parse("csos") is Dataflow.CSOS
    assert Dataflow.names() == ["dOS", "dWS", "dIS", "sOS", "sWS", "sIS", "csOS"]
    with pytest.raises(ValueError, match="dOS"):
        Dataflow.parse("xOS")


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        simulate_gemm(WALK_ARCH, "dOS", np.ones((2, 3)), np.ones((4, 2)))


# ---------------------------------------------------------------------------
# walk-through tiles


def test_walkthrough_sos():
    o, r = simulate_gemm(WALK_ARCH, "sOS", W_SKIP, X_WALK)
    assert r.steps == 10 and r.weight_words_read == 7 and r.weight_load_phases == 2
    assert np.array_equal(o, gemm_ref(W_SKIP, X_WALK))


def test_walkthrough_sws():
    o, r = simulate_gemm(WALK_ARCH, "sWS", W_SKIP, X_WALK)
    assert r.steps == 10 and r.weight_words_read == 7
    assert np.array_equal(o, gemm_ref(W_SKIP, X_WALK))


def test_walkthrough_sis():
    # the transposed analogue: two non-zero weight rows
    w, x = W_SKIP.T.copy(), np.arange(1, 7, dtype=np.float32).reshape(3, 2)
    o, r = simulate_gemm(WALK_ARCH, "sIS", w, x)
    assert r.steps == 10 and r.weight_words_read == 7 and r.weight_load_phases == 2
    assert np.array_equal(o, gemm_ref(w, x))


def test_walkthrough_csos_fewer_load_phases():
    _, s = simulate_gemm(WALK_ARCH, "sOS", W_MERGE, X_WALK)
    o, c = simulate_gemm(WALK_ARCH, "csOS", W_MERGE, X_WALK)
    assert (s.weight_load_phases, c.weight_load_phases) == (3, 2)
    assert c.steps < s.steps
    assert np.array_equal(o, gemm_ref(W_MERGE, X_WALK))


def test_csos_injection_walk():
    # merged column holds original columns [1, 2, 1] by row: row 1 needs its
    # own injection because its index differs from the top row's
    inj = csos_injections(np.array([1, 2, 1]))
    assert [k for k, _, _ in inj] == [1, 2]
    assert sum(len(rows) for _, _, rows in inj) == 3
    assert csos_injections(np.array([-1, 0, -1])) and all(
        k == 0 for k, _, _ in csos_injections(np.array([-1, 0, -1])))


# ---------------------------------------------------------------------------
# functional equivalence


@settings(max_examples=120)
@given(st.sampled_from(FLOWS), st.integers(2, 5), st.integers(2, 5), st.integers(1, 24),
       st.integers(1, 24), st.integers(1, 24), st.sampled_from([0.0, 0.5, 0.9, 1.0]),
       st.integers(0, 10_000), st.integers(1, 8))
def test_matches_reference(df, R, Cc, M, K, N, s, seed, ports):
    arch = ArchConfig(R, Cc, mem_ports=ports)
    w, x = random_sparse(M, K, s, seed), random_sparse(K, N, 0.0, seed + 1)
    o, r = simulate_gemm(arch, df, w, x)
    assert scaled_error(o, w, x) <= 1e-5
    assert r.mac_ops <= r.cycles * arch.pe_count
    assert r.output_words_written >= M * N


@settings(max_examples=60)
@given(st.sampled_from(FLOWS), st.integers(2, 4), st.integers(2, 4), st.integers(1, 10),
       st.integers(1, 10), st.integers(1, 10), st.sampled_from([0.0, 0.6, 0.95]),
       st.integers(0, 999), st.integers(1, 4))
def test_trace_changes_nothing_and_respects_ports(df, R, Cc, M, K, N, s, seed, ports):
    arch = ArchConfig(R, Cc, mem_ports=ports)
    w, x = random_sparse(M, K, s, seed), random_sparse(K, N, 0.0, seed + 1)
    o1, r1 = simulate_gemm(arch, df, w, x)
    o2, r2 = simulate_gemm(arch, df, w, x, trace=True)
    assert r1.to_dict() == r2.to_dict()
    assert np.array_equal(o1, o2)
    wpc = arch.words_per_cycle
    assert len(r2.step_log) == r2.steps
    assert sum(e[2] for e in r2.step_log) == r2.cycles
    for _, _, cyc, words, macs in r2.step_log:
        assert words <= cyc * wpc and macs <= arch.pe_count
    per_cycle = Counter(e.cycle for e in r2.trace if e.action in ("read", "write"))
    assert not per_cycle or max(per_cycle.values()) <= wpc
    reads = sum(1 for e in r2.trace if e.action == "read")
    writes = sum(1 for e in r2.trace if e.action == "write")
    assert reads == r2.words_read and writes == r2.output_words_written
    assert sum(1 for e in r2.trace if e.action == "zero") == r2.zeros_emitted


# ---------------------------------------------------------------------------
# dense schedules against closed forms


@given(st.integers(2, 5), st.integers(2, 5), st.integers(1, 8), st.integers(1, 17),
       st.integers(1, 17), st.integers(1, 17))
def test_dense_os_closed_form(R, Cc, ports, M, K, N):
    arch = ArchConfig(R, Cc, mem_ports=ports)
    wpc = arch.words_per_cycle
    _, r = simulate_gemm(arch, "dOS", random_sparse(M, K, 0, 1), random_sparse(K, N, 0, 2))
    cycles = steps = 0
    for rv in _spans(M, R):
        for cv in _spans(N, Cc):
            for _ in range(K):
                # one load step, then an rv+cv-1 step wavefront
                cycles += max(1, math.ceil((rv + cv) / wpc)) + rv + cv - 1
                steps += rv + cv
            cycles += max(1, math.ceil(rv * cv / wpc)) - 1  # output rides the last step
    assert (r.cycles, r.steps) == (cycles, steps)
    assert r.weight_words_read == M * K * math.ceil(N / Cc)
    assert r.input_words_read == K * N * math.ceil(M / R)
    assert (r.output_words_written, r.mac_ops, r.psum_words_read) == (M * N, M * K * N, 0)


@given(st.integers(2, 5), st.integers(2, 5), st.integers(1, 17), st.integers(1, 17), st.integers(1, 17))
def test_dense_ws_is_traffic(R, Cc, M, K, N):
    arch = ArchConfig(R, Cc)
    w, x = random_sparse(M, K, 0, 3), random_sparse(K, N, 0, 4)
    _, ws = simulate_gemm(arch, "dWS", w, x)
    groups = sum(math.ceil(kv / Cc) for kv in _spans(K, R))
    assert ws.weight_words_read == M * K
    assert ws.input_words_read == K * N * math.ceil(M / R)
    assert (ws.psum_words_read, ws.output_words_written) == (M * N * (groups - 1), M * N * groups)
    _, is_ = simulate_gemm(arch, "dIS", w, x)
    kt = math.ceil(K / R)
    assert is_.weight_words_read == M * K * math.ceil(N / Cc)
    assert is_.input_words_read == K * N
    assert (is_.psum_words_read, is_.output_words_written) == (M * N * (kt - 1), M * N * kt)
    assert ws.mac_ops == is_.mac_ops == M * K * N


# ---------------------------------------------------------------------------
# sparse behaviour


@pytest.mark.parametrize("df", SPARSE_FLOWS)
def test_all_zero_weights(df):
    arch = ArchConfig(3, 3)
    w = np.zeros((7, 10), np.float32)
    o, r = simulate_gemm(arch, df, w, random_sparse(10, 5, 0, 1))
    assert r.mac_ops == 0 and not o.any()
    # only metadata is read: per weight tile, column bitmap plus (empty)
    # element bitmap for two-stage, or the count word for CSB
    tiles = len(_spans(7, 3)) * len(_spans(10, 3))
    # WS reads each weight tile once; the others once per input column span
    passes = 1 if df is Dataflow.SWS else len(_spans(5, 3))
    assert r.weight_words_read == tiles * passes


def _zero_one(tile, axis, rng):
    live = np.flatnonzero(tile.any(axis=axis))
    if live.size == 0:
        return None
    t = tile.copy()
    k = rng.choice(live)
    if axis == 0:
        t[:, k] = 0
    else:
        t[k, :] = 0
    return t


@settings(max_examples=150)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 10**6),
       st.sampled_from([0.0, 0.3, 0.6, 0.9]), st.integers(1, 8))
def test_skip_monotonicity(R, Cc, seed, s, ports):
    arch = ArchConfig(R, Cc, mem_ports=ports)
    rng = np.random.default_rng(seed)
    for df, shape, axis in ((Dataflow.SOS, (R, R), 0), (Dataflow.SWS, (R, R), 0),
                            (Dataflow.CSOS, (R, R), 0), (Dataflow.SIS, (R, R), 1)):
        w = random_sparse(*shape, s, seed)
        w2 = _zero_one(w, axis, rng)
        if w2 is None:
            continue
        x = random_sparse(R, Cc, 0, seed + 1)
        _, a = simulate_gemm(arch, df, w, x)
        _, b = simulate_gemm(arch, df, w2, x)
        assert b.cycles <= a.cycles and b.weight_words_read <= a.weight_words_read


@given(st.integers(2, 5), st.integers(2, 5), st.integers(1, 20), st.integers(1, 20),
       st.integers(1, 20), st.integers(0, 999))
def test_sparse_flows_not_faster_than_own_dense_flow_on_dense_weights(R, Cc, M, K, N, seed):
    arch = ArchConfig(R, Cc)
    w, x = random_sparse(M, K, 0, seed), random_sparse(K, N, 0, seed + 1)
    for sp, dn in ((Dataflow.SOS, Dataflow.DOS), (Dataflow.SWS, Dataflow.DWS), (Dataflow.SIS, Dataflow.DIS)):
        assert simulate_gemm(arch, sp, w, x)[1].cycles >= simulate_gemm(arch, dn, w, x)[1].cycles


@given(st.integers(2, 5), st.integers(2, 5), st.integers(1, 20), st.integers(1, 20),
       st.integers(1, 20), st.integers(0, 999))
def test_dense_weights_dense_winner_without_port_stalls(R, Cc, M, K, N, seed):
    # csOS splits weight and input reads over two steps, so under port stalls
    # it can undercut dOS on dense data; with ample ports it cannot
    arch = ArchConfig(R, Cc, mem_ports=R * Cc + R + Cc)
    w, x = random_sparse(M, K, 0, seed), random_sparse(K, N, 0, seed + 1)
    res = {df: simulate_gemm(arch, df, w, x)[1] for df in FLOWS}
    best = min(r.cycles for r in res.values())
    assert min(res[d].cycles for d in DENSE_FLOWS) == best
    assert res[Dataflow.CSOS].steps >= res[Dataflow.DOS].steps


def test_zero_weights_sparse_flow_wins():
    spec = OperatorSpec.fc(24, 16, batch=4)
    df, _ = best_dataflow(ArchConfig(4, 4), spec, np.zeros((16, 24)), random_sparse(4, 24, 0, 1))
    assert df.sparse


def test_csos_not_slower_than_sos_on_mergeable_columns():
    arch = ArchConfig(4, 4)
    for seed in range(30):
        w = random_sparse(16, 16, 0.9, seed)
        x = random_sparse(16, 8, 0, seed + 1)
        assert simulate_gemm(arch, "csOS", w, x)[1].cycles <= simulate_gemm(arch, "sOS", w, x)[1].cycles


def test_pick_fastest_tie_order():
    res = {Dataflow.CSOS: SimResult(cycles=5), Dataflow.DWS: SimResult(cycles=5), Dataflow.SOS: SimResult(cycles=6)}
    assert pick_fastest(res) is Dataflow.DWS


# ---------------------------------------------------------------------------
# operators


def test_fc_operator_output():
    spec = OperatorSpec.fc(16, 16, batch=1)
    w, x = random_sparse(16, 16, 0, 1), random_sparse(1, 16, 0, 2)
    o, _ = simulate_operator(ArchConfig(4, 4), "dOS", spec, w, x)
    assert o.shape == (1, 16)
    np.testing.assert_allclose(o[0], w.astype(np.float64) @ x[0].astype(np.float64), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("df", FLOWS)
def test_one_by_one_conv_equals_fc(df):
    cin, cout, hw = 6, 5, 3
    conv = OperatorSpec.conv(cin, cout, 1, hw)
    fc = OperatorSpec.fc(cin, cout, batch=hw * hw)
    w = random_sparse(cout, cin, 0.5, 3)
    x = random_sparse(cin, hw * hw, 0, 4)
    arch = ArchConfig(3, 4)
    oc, rc = simulate_operator(arch, df, conv, w, x)
    of, rf = simulate_operator(arch, df, fc, w, x.T.copy())
    assert rc.to_dict() == rf.to_dict()
    assert np.array_equal(oc.reshape(cout, -1), of.T)


@pytest.mark.parametrize("df", SPARSE_FLOWS)
def test_pruned_conv_not_slower(df):
    from sparse_systolic.pruning import PruneConfig, prune_vectors

    spec = OperatorSpec.conv(4, 8, 3, 6, padding=1)
    arch = ArchConfig(4, 4)
    w = random_sparse(8, 36, 0, 5)
    x = random_sparse(4, 36, 0, 6)
    orient = "row" if df is Dataflow.SIS else "column"
    tiles = (4, 4)
    pw = prune_vectors([w], *tiles, PruneConfig(4, orient), 0.6)[0]
    full = simulate_operator(arch, df, spec, w, x)[1].cycles
    assert simulate_operator(arch, df, spec, pw, x)[1].cycles <= full


def test_result_addition():
    a = SimResult("dOS", cycles=3, mac_ops=2)
    b = SimResult("dOS", cycles=4, mac_ops=1)
    assert (a + b).cycles == 7 and (a + b).dataflow == "dOS"
    assert (a + SimResult("sOS")).dataflow == "mixed"
