"""Synthetic operators and workloads for tests, scripts and ``gen workload``."""

from __future__ import annotations

import json
from pathlib import Path

from .dse import WorkloadOp
from .lowering import OperatorSpec
from .matrix import random_sparse, store_matrix


def synthetic_op(spec: OperatorSpec, seed: int, sparsity: float = 0.0) -> WorkloadOp:
    """Random weights (element sparsity ``sparsity``) and dense random inputs.

    Tensors are stored as 2-D matrices with the operator's flattening:
    weights ``(M, K)``; CONV inputs ``(in_channels, input_h * input_w)``;
    FC inputs ``(batch, in_features)``.
    """
    m, k, _ = spec.gemm_dims
    w = random_sparse(m, k, sparsity, seed)
    if spec.kind == "CONV":
        x = random_sparse(spec.in_channels, spec.input_h * spec.input_w, 0.0, seed + 1)
    else:
        x = random_sparse(spec.batch, spec.in_features, 0.0, seed + 1)
    return WorkloadOp(spec, w, x)


def adversarial_specs() -> list[OperatorSpec]:
    """Three operators whose individually best array shapes disagree.

    ``tall`` (matrix-vector, many output rows) favours tall arrays, ``wide``
    (few filters, many pixels) favours wide arrays, ``mid`` sits in between.
    """
    return [
        OperatorSpec.fc(64, 72, batch=1, name="tall"),
        OperatorSpec.conv(2, 4, 3, 10, padding=1, name="wide"),
        OperatorSpec.conv(8, 16, 3, 6, padding=1, name="mid"),
    ]


def adversarial_workload(seed: int = 0, sparsity: float = 0.0) -> list[WorkloadOp]:
    return [synthetic_op(s, seed + 10 * i, sparsity) for i, s in enumerate(adversarial_specs())]


def small_cnn_specs() -> list[OperatorSpec]:
    """A toy CONV/CONV/FC stack used by the speedup experiments."""
    return [
        OperatorSpec.conv(3, 16, 3, 12, padding=1, name="conv1"),
        OperatorSpec.conv(16, 32, 3, 6, stride=1, padding=1, name="conv2"),
        OperatorSpec.fc(256, 64, batch=4, name="fc1"),
    ]


def save_workload(ops, out_dir, pe_budget: int = 72, variants=None) -> Path:
    """Write each operator's JSON and FSMX tensors plus a ready-to-run DSE config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for op in ops:
        name = op.spec.name
        (out / f"{name}.json").write_text(json.dumps(op.spec.to_dict(), indent=2) + "\n")
        store_matrix(op.weights, out / f"{name}_w.fsmx")
        store_matrix(op.inputs, out / f"{name}_x.fsmx")
        entries.append({"op": op.spec.to_dict(), "weights": f"{name}_w.fsmx", "inputs": f"{name}_x.fsmx"})
    cfg = {
        "pe_budget": pe_budget,
        "min_dim": 2,
        "dataflows": ["dOS", "dWS", "dIS", "sOS", "sWS", "sIS", "csOS"],
        "prune_variants": variants or [
            {"n": "dense"}, {"n": "rows", "orientation": "column"}, {"n": "cols", "orientation": "row"},
        ],
        "prune": {"initial_sparsity": 0.7, "delta": 0.01},
        "oracle": {"kind": "sparsity", "threshold": 0.8},
        "workload": entries,
    }
    path = out / "dse.json"
    path.write_text(json.dumps(cfg, indent=2) + "\n")
    return path
