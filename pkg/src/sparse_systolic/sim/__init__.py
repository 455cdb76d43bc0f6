"""Cycle-approximate systolic-array simulator."""

from .config import ArchConfig, Dataflow, SimResult, TraceEvent
from .controller import Controller
from .dataflows import csos_injections
from .engine import best_dataflow, compare_dataflows, pick_fastest, simulate_gemm, simulate_operator

__all__ = [
    "ArchConfig", "Dataflow", "SimResult", "TraceEvent", "Controller", "csos_injections",
    "simulate_gemm", "simulate_operator", "compare_dataflows", "pick_fastest", "best_dataflow",
]
