import csv
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_systolic.dse import (
    Cell,
    DseConfig,
    DseGrid,
    PruneVariant,
    WorkloadOp,
    best_for,
    enumerate_shapes,
    operator_optima,
    run_dse,
    select_best,
    summary,
)
from sparse_systolic.lowering import OperatorSpec
from sparse_systolic.sim import Dataflow, SimResult
from sparse_systolic.workloads import adversarial_workload, save_workload, synthetic_op


def test_enumerate_shapes():
    assert enumerate_shapes(72) == [(2, 36), (3, 24), (4, 18), (6, 12), (8, 9), (9, 8),
                                    (12, 6), (18, 4), (24, 3), (36, 2)]
    assert enumerate_shapes(4) == [(2, 2)]
    assert enumerate_shapes(7) == []


@given(st.integers(1, 400), st.integers(1, 5))
def test_enumerate_shapes_property(budget, min_dim):
    shapes = enumerate_shapes(budget, min_dim)
    brute = [(r, c) for r in range(1, budget + 1) for c in range(1, budget + 1)
             if r * c == budget and r >= min_dim and c >= min_dim]
    assert shapes == brute


def test_variant_binding():
    assert PruneVariant("rows").vector_len((4, 18)) == 4
    assert PruneVariant("cols", "row").vector_len((4, 18)) == 18
    assert PruneVariant(3).vector_len((4, 18)) == 3
    assert PruneVariant("dense").vector_len((4, 18)) is None
    with pytest.raises(ValueError):
        PruneVariant("diag")


def _single_fc(variants):
    op = synthetic_op(OperatorSpec.fc(12, 10, batch=2, name="fc"), 1)
    return DseConfig(pe_budget=4, workload=[op], prune_variants=variants)


def test_smallest_sweep():
    grid = run_dse(_single_fc([PruneVariant("dense"), PruneVariant("rows")]))
    assert grid.shapes == [(2, 2)]
    assert len(grid.cells) == 1 * 7 * 2 * 1 and not grid.failed


def test_dense_workload_picks_dense_flow():
    cfg = DseConfig(pe_budget=12, workload=adversarial_workload(3)[:2], arch={"mem_ports": 64})
    best = select_best(run_dse(cfg))
    assert all(not df.sparse for df in best.assignment.values())


def _fake_grid(rng, shapes, variants, ops):
    flows = list(Dataflow)
    cells = {}
    for s in shapes:
        for vi, v in enumerate(variants):
            for df in flows:
                for op in ops:
                    cells[s, df, vi, op] = Cell(s, df, v, op, SimResult(cycles=int(rng.integers(1, 50))))
    return DseGrid(shapes, flows, variants, ops, cells)


@settings(max_examples=50)
@given(st.integers(0, 10**6))
def test_select_best_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    shapes, variants, ops = [(2, 6), (3, 4), (4, 3)], [PruneVariant("dense"), PruneVariant("rows")], ["a", "b"]
    grid = _fake_grid(rng, shapes, variants, ops)
    best = select_best(grid)
    # brute force: enumerate every per-operator dataflow assignment too
    flows = list(Dataflow)
    brute = None
    for si, s in enumerate(shapes):
        for vi in range(len(variants)):
            for combo in itertools.product(flows, repeat=len(ops)):
                total = sum(grid.cycles(s, df, vi, op) for df, op in zip(combo, ops))
                if brute is None or total < brute[0]:
                    brute = (total, s, vi)
    assert (best.cycles, best.shape, variants.index(best.variant)) == brute
    # never worse than any uniform dataflow
    for df in flows:
        for s in shapes:
            for vi in range(len(variants)):
                assert best.cycles <= sum(grid.cycles(s, df, vi, op) for op in ops)


def test_one_cell_and_dominance():
    rng = np.random.default_rng(0)
    grid = _fake_grid(rng, [(2, 2)], [PruneVariant("dense")], ["only"])
    grid.dataflows = [Dataflow.DOS]
    assert select_best(grid).assignment == {"only": Dataflow.DOS}
    grid = _fake_grid(rng, [(2, 6), (3, 4)], [PruneVariant("dense")], ["a", "b"])
    for (s, df, vi, op), c in grid.cells.items():
        c.result.cycles = 1 if (s, df) == ((3, 4), Dataflow.SWS) else 100
    best = select_best(grid)
    assert best.shape == (3, 4) and set(best.assignment.values()) == {Dataflow.SWS}


def test_failed_cells_are_recorded():
    # a failing oracle sinks the pruning step, which marks every cell of the unit
    cfg = _single_fc([PruneVariant("rows")])
    cfg.oracle = {"kind": "command", "command": "/nonexistent/oracle"}
    grid = run_dse(cfg)
    assert len(grid.failed) == len(grid.cells)
    assert all(c.error.startswith("prune:") for c in grid.failed)
    assert best_for(grid, (2, 2), 0) is None
    with pytest.raises(ValueError):
        select_best(grid)


def test_deterministic_and_parallel_equal():
    cfg = DseConfig(pe_budget=8, workload=adversarial_workload(1, 0.3)[:2],
                    prune_variants=[PruneVariant("dense"), PruneVariant("rows")])
    a, b = run_dse(cfg), run_dse(cfg, jobs=2)
    assert {k: c.result.to_dict() for k, c in a.cells.items()} == {k: c.result.to_dict() for k, c in b.cells.items()}
    assert a.sparsity == b.sparsity


def test_config_file_round_trip(tmp_path):
    ops = adversarial_workload(2)
    path = save_workload(ops, tmp_path, pe_budget=8, variants=[{"n": "dense"}])
    cfg = DseConfig.load(path)
    assert [o.name for o in cfg.workload] == ["tall", "wide", "mid"]
    assert np.array_equal(cfg.workload[1].weights, ops[1].weights)
    grid = run_dse(cfg)
    out = tmp_path / "grid.csv"
    grid.write_csv(out)
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == len(grid.cells)
    assert set(rows[0]) >= {"shape", "dataflow", "n", "orientation", "operator", "cycles", "reads", "writes", "macs"}
    s = summary(grid, select_best(grid))
    json.dumps(s)
    assert s["failed_cells"] == 0 and set(s["operator_optima"]) == {"tall", "wide", "mid"}


def test_config_validation():
    op = synthetic_op(OperatorSpec.fc(4, 4, name="x"), 0)
    with pytest.raises(ValueError):
        DseConfig(pe_budget=4, workload=[])
    with pytest.raises(ValueError):
        DseConfig(pe_budget=4, workload=[op, op])
    with pytest.raises(ValueError):
        DseConfig(pe_budget=4, workload=[op], dataflows=["fastOS"])
    assert isinstance(op, WorkloadOp)


def test_operator_optima_shape():
    rng = np.random.default_rng(4)
    grid = _fake_grid(rng, [(2, 6), (3, 4)], [PruneVariant("dense")], ["a"])
    (shape, vi, df, cyc), = operator_optima(grid).values()
    assert cyc == min(c.result.cycles for c in grid.cells.values())
