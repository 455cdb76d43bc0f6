"""Cycle-approximate simulator of a sparse/dense systolic-array GEMM accelerator."""

__version__ = "0.1.0"
