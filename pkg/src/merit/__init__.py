"""Gather-view tensor engine with tiling, bank-conflict and routing analysis."""

from .engine import TilingPlan, TrafficReport, Workload, reuse_rate, run_full, run_tiled, traffic_naive_unrolled
from .errors import MeritError
from .rip import AluInstr, LookupTable, StrategyProgram, alu_op, phase_range, rip_execute
from .tensor import REAL32, DType, Tensor, fix16, read_tensor, tensor_at, write_tensor
from .view import Boundary, Footprint, ViewSpec, ViewTerm, footprint, validate_spec, view_gather, view_materialize

__all__ = [
    "AluInstr", "Boundary", "DType", "Footprint", "LookupTable", "MeritError", "REAL32", "StrategyProgram",
    "Tensor", "TilingPlan", "TrafficReport", "ViewSpec", "ViewTerm", "Workload", "alu_op", "fix16", "footprint",
    "phase_range", "read_tensor", "reuse_rate", "rip_execute", "run_full", "run_tiled", "tensor_at",
    "traffic_naive_unrolled", "validate_spec", "view_gather", "view_materialize", "write_tensor",
]
