"""Sparse-over-dense speedup of a toy CNN as vector-pruning sparsity grows.

Each operator's weights are pruned in tile-height column vectors (row
vectors for a second pass), then the fastest dataflow is picked per operator
for both the dense and the pruned weights.
"""

import argparse

from sparse_systolic.lowering import lower_operator
from sparse_systolic.pruning import PruneConfig, prune_vectors
from sparse_systolic.sim import ArchConfig, best_dataflow
from sparse_systolic.workloads import small_cnn_specs, synthetic_op


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", type=int, nargs=2, default=(8, 8), metavar=("R", "C"))
    ap.add_argument("--ports", type=int, default=8)
    ap.add_argument("--sparsities", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 0.9])
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    r, c = args.shape
    arch = ArchConfig(r, c, mem_ports=args.ports)
    ops = [synthetic_op(s, args.seed + i) for i, s in enumerate(small_cnn_specs())]
    dense = {op.name: best_dataflow(arch, op.spec, op.weights, op.inputs) for op in ops}
    total_dense = sum(res.cycles for _, res in dense.values())
    print("orientation,sparsity,operator,dense_flow,dense_cycles,sparse_flow,sparse_cycles")
    for orientation, n in (("column", r), ("row", r)):
        for s in args.sparsities:
            total = 0
            for op in ops:
                w, _ = lower_operator(op.spec, op.weights, op.inputs)
                pw = prune_vectors([w], n, n, PruneConfig(n, orientation), s)[0]
                df, res = best_dataflow(arch, op.spec, pw, op.inputs)
                ddf, dres = dense[op.name]
                total += res.cycles
                print(f"{orientation},{s},{op.name},{ddf.value},{dres.cycles},{df.value},{res.cycles}")
            print(f"{orientation},{s},TOTAL,,{total_dense},,{total}  # speedup {total_dense / total:.2f}")


if __name__ == "__main__":
    main()
