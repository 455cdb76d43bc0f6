"""Speedup from doubling both array dimensions, per dataflow and port count.

A dense GEMM on R x C versus 2R x 2C. With few memory ports the schedule is
bound by the memory interface and the speedup stays near 2 rather than 4.
"""

import argparse

from sparse_systolic.matrix import random_sparse
from sparse_systolic.sim import ArchConfig, Dataflow, simulate_gemm


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64), metavar=("M", "K", "N"))
    ap.add_argument("--base", type=int, nargs=2, default=(4, 4), metavar=("R", "C"))
    ap.add_argument("--ports", type=int, nargs="+", default=[1, 2, 8, 64])
    ap.add_argument("--sparsity", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m, k, n = args.dims
    w = random_sparse(m, k, args.sparsity, args.seed)
    x = random_sparse(k, n, 0.0, args.seed + 1)
    r, c = args.base
    print("ports,dataflow,small_cycles,big_cycles,speedup")
    for p in args.ports:
        for df in Dataflow:
            small = simulate_gemm(ArchConfig(r, c, mem_ports=p), df, w, x)[1].cycles
            big = simulate_gemm(ArchConfig(2 * r, 2 * c, mem_ports=p), df, w, x)[1].cycles
            print(f"{p},{df.value},{small},{big},{small / big:.3f}")


if __name__ == "__main__":
    main()
