"""Design-space exploration over array shapes, dataflows and pruning variants.

For a fixed PE budget every factor pair ``(rows, cols)`` is a candidate shape.
Each (shape, pruning variant) unit prunes the workload with the vector length
bound to the shape, then simulates every operator under every dataflow. The
grid is assembled in enumeration order, so worker scheduling never changes
the result.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .lowering import OperatorSpec, lower_operator
from .matrix import load_matrix
from .pruning import (
    CommandOracle,
    EnergyOracle,
    PruneConfig,
    SparsityThresholdOracle,
    group_by_kind,
    prune_schedule,
)
from .sim import ArchConfig, Dataflow, SimResult, simulate_gemm
from .sim.engine import pick_fastest


def enumerate_shapes(budget: int, min_dim: int = 2) -> list[tuple[int, int]]:
    """All ``(rows, cols)`` with ``rows * cols == budget`` and both dims >= ``min_dim``."""
    if budget < 1 or min_dim < 1:
        raise ValueError("budget and min_dim must be >= 1")
    return [(r, budget // r) for r in range(min_dim, budget // min_dim + 1)
            if budget % r == 0 and budget // r >= min_dim]


@dataclass(frozen=True)
class PruneVariant:
    """How to prune for one DSE column.

    ``n`` is ``"rows"`` or ``"cols"`` (bound to the candidate shape), a fixed
    integer, or ``"dense"`` for no pruning.
    """

    n: object = "rows"
    orientation: str = "column"

    def __post_init__(self):
        if self.n not in ("rows", "cols", "dense") and not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError(f"variant n must be 'rows', 'cols', 'dense' or a positive int, got {self.n!r}")
        if self.orientation not in ("column", "row"):
            raise ValueError(f"bad orientation {self.orientation!r}")

    @property
    def dense(self) -> bool:
        return self.n == "dense"

    def vector_len(self, shape: tuple[int, int]) -> int | None:
        if self.dense:
            return None
        return {"rows": shape[0], "cols": shape[1]}.get(self.n, self.n)

    @property
    def label(self) -> str:
        return "dense" if self.dense else f"{self.n}/{self.orientation}"


@dataclass
class WorkloadOp:
    spec: OperatorSpec
    weights: np.ndarray
    inputs: np.ndarray

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass
class DseConfig:
    pe_budget: int
    workload: list
    min_dim: int = 2
    dataflows: list = field(default_factory=lambda: list(Dataflow))
    prune_variants: list = field(default_factory=lambda: [PruneVariant("dense")])
    prune: dict = field(default_factory=dict)  # PruneConfig fields except vector_len/orientation
    oracle: dict = field(default_factory=lambda: {"kind": "sparsity", "threshold": 0.8})
    arch: dict = field(default_factory=dict)  # extra ArchConfig fields (mem_ports, ...)

    def __post_init__(self):
        if not self.workload:
            raise ValueError("workload must not be empty")
        self.dataflows = [Dataflow.parse(d) if isinstance(d, str) else d for d in self.dataflows]
        self.prune_variants = [v if isinstance(v, PruneVariant) else PruneVariant(**v) for v in self.prune_variants]
        names = [op.name for op in self.workload]
        if len(set(names)) != len(names) or not all(names):
            raise ValueError("workload operators need unique, non-empty names")

    @classmethod
    def load(cls, path) -> "DseConfig":
        """Read a JSON config; operator tensor paths are relative to the file."""
        path = Path(path)
        with open(path) as fh:
            d = json.load(fh)
        root = path.parent
        ops = []
        for entry in d.pop("workload"):
            spec = OperatorSpec.from_dict(entry["op"])
            ops.append(WorkloadOp(spec, load_matrix(root / entry["weights"]), load_matrix(root / entry["inputs"])))
        return cls(workload=ops, **d)


@dataclass
class Cell:
    shape: tuple
    dataflow: Dataflow
    variant: PruneVariant
    operator: str
    result: SimResult | None
    error: str = ""


@dataclass
class DseGrid:
    shapes: list
    dataflows: list
    variants: list
    operators: list
    cells: dict  # (shape, dataflow, variant_index, operator) -> Cell
    sparsity: dict = field(default_factory=dict)  # (shape, variant_index) -> per-group sparsities

    def cycles(self, shape, df, vi, op) -> int | None:
        c = self.cells[shape, df, vi, op]
        return None if c.result is None else c.result.cycles

    @property
    def failed(self) -> list:
        return [c for c in self.cells.values() if c.result is None]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["shape", "dataflow", "n", "orientation", "operator", "cycles", "reads", "writes", "macs", "error"])
            for shape in self.shapes:
                for vi, v in enumerate(self.variants):
                    n = v.vector_len(shape)
                    for df in self.dataflows:
                        for op in self.operators:
                            c = self.cells[shape, df, vi, op]
                            r = c.result
                            w.writerow([f"{shape[0]}x{shape[1]}", df.value, "dense" if n is None else n,
                                        "" if v.dense else v.orientation, op,
                                        *(("", "", "", "") if r is None else
                                          (r.cycles, r.words_read, r.output_words_written, r.mac_ops)),
                                        c.error])


def _oracle(spec: dict, reference):
    kind = spec.get("kind", "sparsity")
    if kind == "sparsity":
        return SparsityThresholdOracle(float(spec["threshold"]))
    if kind == "energy":
        return EnergyOracle(reference)
    if kind == "command":
        return CommandOracle(spec["command"], spec.get("timeout"))
    raise ValueError(f"unknown oracle kind {kind!r}")


def _prune_for(cfg: DseConfig, shape, variant: PruneVariant, lowered):
    """Pruned GEMM weights per operator, plus per-group sparsities."""
    weights = [w for w, _ in lowered]
    n = variant.vector_len(shape)
    if n is None:
        return weights, ()
    kinds = [op.spec.kind for op in cfg.workload]
    groups = group_by_kind(zip(kinds, weights))
    pcfg = PruneConfig(vector_len=n, orientation=variant.orientation, **cfg.prune)
    # square n x n tiles: vectors are whole tile columns or rows either way
    result = prune_schedule(groups, pcfg, _oracle(cfg.oracle, [g.matrices for g in groups]), (n, n))
    pruned = {g.kind: list(ws) for g, ws in zip(groups, result.weights)}
    out = [pruned[k].pop(0) for k in kinds]
    return out, result.sparsities


def _run_unit(args):
    cfg, shape, vi = args
    variant = cfg.prune_variants[vi]
    arch = ArchConfig(shape[0], shape[1], **cfg.arch)
    lowered = [lower_operator(op.spec, op.weights, op.inputs) for op in cfg.workload]
    try:
        weights, sparsity = _prune_for(cfg, shape, variant, lowered)
    except Exception as exc:  # the whole unit fails; every cell records why
        return shape, vi, {(df, op.name): (None, f"prune: {exc}") for df in cfg.dataflows for op in cfg.workload}, ()
    cells = {}
    for df in cfg.dataflows:
        for op, w, (_, x) in zip(cfg.workload, weights, lowered):
            try:
                cells[df, op.name] = (simulate_gemm(arch, df, w, x)[1], "")
            except Exception as exc:
                cells[df, op.name] = (None, str(exc))
    return shape, vi, cells, sparsity


def run_dse(cfg: DseConfig, jobs: int = 1) -> DseGrid:
    shapes = enumerate_shapes(cfg.pe_budget, cfg.min_dim)
    units = [(cfg, s, vi) for s in shapes for vi in range(len(cfg.prune_variants))]
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_unit, units))
    else:
        done = [_run_unit(u) for u in units]
    grid = DseGrid(shapes, list(cfg.dataflows), list(cfg.prune_variants), [op.name for op in cfg.workload], {})
    # map() preserves submission order, so assembly is deterministic
    for shape, vi, cells, sparsity in done:
        grid.sparsity[shape, vi] = sparsity
        for (df, op), (res, err) in cells.items():
            grid.cells[shape, df, vi, op] = Cell(shape, df, cfg.prune_variants[vi], op, res, err)
    return grid


@dataclass
class Selection:
    shape: tuple
    variant: PruneVariant
    assignment: dict  # operator -> Dataflow
    cycles: int
    per_operator: dict = field(default_factory=dict)  # operator -> cycles

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "variant": asdict(self.variant),
            "assignment": {k: v.value for k, v in self.assignment.items()},
            "cycles": self.cycles,
            "per_operator_cycles": self.per_operator,
        }


def best_for(grid: DseGrid, shape, vi) -> Selection | None:
    """Per-operator fastest dataflow for one (shape, variant); None if a cell failed."""
    assignment, per_op = {}, {}
    for op in grid.operators:
        results = {df: grid.cells[shape, df, vi, op].result for df in grid.dataflows}
        if any(r is None for r in results.values()):
            return None
        df = pick_fastest(results)
        assignment[op], per_op[op] = df, results[df].cycles
    return Selection(shape, grid.variants[vi], assignment, sum(per_op.values()), per_op)


def select_best(grid: DseGrid) -> Selection:
    """Whole-workload argmin over (shape, variant); ties go to the earlier shape, then variant."""
    best = None
    for shape in grid.shapes:
        for vi in range(len(grid.variants)):
            sel = best_for(grid, shape, vi)
            if sel is not None and (best is None or sel.cycles < best.cycles):
                best = sel
    if best is None:
        raise ValueError("grid has no complete configuration")
    return best


def operator_optima(grid: DseGrid) -> dict:
    """For each operator alone: its fastest (shape, variant index, dataflow, cycles)."""
    out = {}
    for op in grid.operators:
        best = None
        for shape in grid.shapes:
            for vi in range(len(grid.variants)):
                for df in grid.dataflows:
                    c = grid.cycles(shape, df, vi, op)
                    if c is not None and (best is None or c < best[3]):
                        best = (shape, vi, df, c)
        out[op] = best
    return out


def summary(grid: DseGrid, best: Selection) -> dict:
    optima = operator_optima(grid)
    return {
        "best": best.to_dict(),
        "shapes": [list(s) for s in grid.shapes],
        "variants": [v.label for v in grid.variants],
        "cells": len(grid.cells),
        "failed_cells": len(grid.failed),
        "operator_optima": {
            op: {"shape": list(o[0]), "variant": grid.variants[o[1]].label, "dataflow": o[2].value, "cycles": o[3]}
            for op, o in optima.items() if o is not None
        },
        "sparsity": {f"{s[0]}x{s[1]}/{grid.variants[vi].label}": list(v) for (s, vi), v in grid.sparsity.items()},
    }


def with_workload(cfg: DseConfig, workload) -> DseConfig:
    return replace(cfg, workload=list(workload))
