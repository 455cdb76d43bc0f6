"""Footprint of a uniform-random 128x512 matrix in every format across sparsities.

Writes CSV (format, sparsity, bits, ratio_to_dense) to stdout or --out.
"""

import argparse
import csv
import sys

import numpy as np

from sparse_systolic.formats import FormatKind, footprint_bits
from sparse_systolic.matrix import random_sparse


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=128)
    ap.add_argument("--cols", type=int, default=512)
    ap.add_argument("--tile", type=int, nargs=2, default=(8, 8), metavar=("R", "C"))
    ap.add_argument("--steps", type=int, default=21, help="sparsity grid points in [0, 1]")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args()

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["format", "sparsity", "bits", "ratio_to_dense"])
    dense = args.rows * args.cols * 32
    for s in np.linspace(0, 1, args.steps):
        m = random_sparse(args.rows, args.cols, float(s), args.seed)
        for fmt in FormatKind:
            bits = footprint_bits(m, fmt, tuple(args.tile))
            w.writerow([fmt.value, f"{s:.2f}", bits, f"{bits / dense:.4f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
