from __future__ import annotations

import numpy as np

from ..lowering import OperatorSpec, lower_operator
from ..matrix import as_matrix
from .config import ArchConfig, Dataflow, SimResult
from .controller import Controller
from .dataflows import run_csos, run_is, run_os, run_ws

_RUNNERS = {"OS": run_os, "WS": run_ws, "IS": run_is}


def simulate_gemm(arch: ArchConfig, df, w, x, trace: bool = False) -> tuple[np.ndarray, SimResult]:
    """Run ``O = W @ X`` through the schedule of dataflow ``df``.

    Sparse dataflows encode each weight tile before the run (two-stage bitmap,
    or CSB for csOS). With ``trace`` the result carries per-unit events and a
    per-step log; counters are identical either way.
    """
    df = Dataflow.parse(df) if isinstance(df, str) else df
    w = as_matrix(w)
    x = as_matrix(x)
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: W is {w.shape}, X is {x.shape}")
    out = np.zeros((w.shape[0], x.shape[1]), dtype=np.float32)
    ctl = Controller(arch, trace)
    if df is Dataflow.CSOS:
        run_csos(ctl, arch, w, x, out)
    else:
        _RUNNERS[df.stationary](ctl, arch, w, x, out, df.sparse)
    return out, ctl.result(df.value)


def _reshape_output(spec: OperatorSpec, o: np.ndarray) -> np.ndarray:
    if spec.kind == "FC":
        return o.T.copy()  # (batch, out_features)
    return o.reshape(spec.out_channels, spec.out_h, spec.out_w)


def simulate_operator(arch: ArchConfig, df, spec: OperatorSpec, weights, inputs,
                      trace: bool = False) -> tuple[np.ndarray, SimResult]:
    """Lower a CONV/FC operator to its GEMM and simulate it.

    Outputs come back in tensor layout: ``(out_channels, out_h, out_w)`` for
    CONV and ``(batch, out_features)`` for FC.
    """
    w, x = lower_operator(spec, weights, inputs)
    o, res = simulate_gemm(arch, df, w, x, trace)
    return _reshape_output(spec, o), res


def compare_dataflows(arch: ArchConfig, spec: OperatorSpec, weights, inputs,
                      dataflows=None) -> dict[Dataflow, SimResult]:
    w, x = lower_operator(spec, weights, inputs)
    flows = list(Dataflow) if dataflows is None else [Dataflow.parse(d) if isinstance(d, str) else d for d in dataflows]
    return {df: simulate_gemm(arch, df, w, x)[1] for df in flows}


def pick_fastest(results: dict) -> Dataflow:
    """Fewest cycles; ties go to the earlier dataflow in enumeration order."""
    order = list(Dataflow)
    return min(results, key=lambda df: (results[df].cycles, order.index(df)))


def best_dataflow(arch: ArchConfig, spec: OperatorSpec, weights, inputs,
                  dataflows=None) -> tuple[Dataflow, SimResult]:
    results = compare_dataflows(arch, spec, weights, inputs, dataflows)
    df = pick_fastest(results)
    return df, results[df]
