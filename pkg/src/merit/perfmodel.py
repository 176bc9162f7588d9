"""Analytic pass-latency, prefetch-overlap and folding model.

Each pass loads the footprint boxes of its tile and then computes. Loads of
pass ``i + 1`` overlap computation of pass ``i`` through a single-deep
prefetch buffer, so the modeled timeline is::

    total = load_0 + sum_i max(compute_i, load_{i+1}) + compute_last

This is deliberately an analytic model, not a cycle-accurate simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .engine import TilingPlan, Workload, _tile_starts, reuse_rate
from .errors import IllegalInstruction, Indivisible
from .rip import AluInstr, StrategyProgram
from .tensor import Tensor
from .view import ViewSpec, ViewTerm, footprint_box


@dataclass(frozen=True)
class MachineParams:
    alus_per_tau: int = 32
    taus: int = 1
    dram_words_per_cycle: float = math.inf
    scratchpad_words: Optional[int] = None
    pipeline_depth: int = 0  # fixed latency added to every load

    def __post_init__(self):
        if self.alus_per_tau < 1 or self.taus < 1:
            raise ValueError("ALU and TAU counts must be positive")
        if not self.dram_words_per_cycle > 0:
            raise ValueError("bandwidth must be positive")
        if self.pipeline_depth < 0:
            raise ValueError("pipeline depth must be non-negative")

    @property
    def alus(self) -> int:
        return self.alus_per_tau * self.taus


@dataclass(frozen=True)
class PassLatency:
    load: int
    compute: int

    @property
    def overlapped(self) -> int:
        """Steady-state cost of the pass when its load hides behind other work."""
        return max(self.load, self.compute)


def load_cycles(words: int, mp: MachineParams) -> int:
    if math.isinf(mp.dram_words_per_cycle):
        return mp.pipeline_depth
    return mp.pipeline_depth + math.ceil(words / mp.dram_words_per_cycle)


def compute_cycles(lanes: int, steps: int, mp: MachineParams) -> int:
    return math.ceil(lanes / mp.alus) * steps


def _pass_words(w: Workload, k_start, tile) -> int:
    return sum(footprint_box(v, k_start, tile)[1].words for v in (w.viewA, w.viewB))


def pass_latency(plan: TilingPlan, w: Workload, mp: MachineParams) -> PassLatency:
    """Latency of one full-size pass of ``plan`` (tile anchored at the origin)."""
    tile = plan.t_p + plan.t_a
    words = _pass_words(w, (0,) * len(tile), tile)
    return PassLatency(load_cycles(words, mp),
                       compute_cycles(int(np.prod(plan.t_p, dtype=np.int64)), int(np.prod(plan.t_a, dtype=np.int64)), mp))


def pass_trace(w: Workload, plan: TilingPlan, mp: MachineParams) -> List[PassLatency]:
    """Every pass in execution order, with clipped edge tiles."""
    plan.validate(w)
    out = []
    for p_start, p_ext in _tile_starts(w.p_shape, plan.t_p):
        lanes = int(np.prod(p_ext, dtype=np.int64))
        for a_start, a_ext in _tile_starts(w.a_shape, plan.t_a):
            words = _pass_words(w, p_start + a_start, p_ext + a_ext)
            out.append(PassLatency(load_cycles(words, mp), compute_cycles(lanes, int(np.prod(a_ext, dtype=np.int64)), mp)))
    return out


@dataclass(frozen=True)
class PipelineReport:
    passes: int
    load_cycles: int
    compute_cycles: int
    total_cycles: int
    bubble_cycles: int
    macs: int
    alus: int

    @property
    def utilization(self) -> float:
        return self.macs / (self.alus * self.total_cycles) if self.total_cycles else 1.0

    def to_dict(self) -> dict:
        return {
            "passes": self.passes,
            "load_cycles": self.load_cycles,
            "compute_cycles": self.compute_cycles,
            "total_cycles": self.total_cycles,
            "bubble_cycles": self.bubble_cycles,
            "macs": self.macs,
            "alus": self.alus,
            "utilization": round(self.utilization, 12),
        }


def pipeline(trace: Sequence[PassLatency], macs: int, alus: int) -> PipelineReport:
    if not trace:
        return PipelineReport(0, 0, 0, 0, 0, macs, alus)
    total = trace[0].load
    bubbles = 0
    for cur, nxt in zip(trace, trace[1:]):
        total += max(cur.compute, nxt.load)
        bubbles += max(0, nxt.load - cur.compute)
    total += trace[-1].compute
    return PipelineReport(
        passes=len(trace),
        load_cycles=sum(p.load for p in trace),
        compute_cycles=sum(p.compute for p in trace),
        total_cycles=total,
        bubble_cycles=bubbles,
        macs=macs,
        alus=alus,
    )


def simulate_pipeline(w: Workload, plan: TilingPlan, mp: MachineParams) -> PipelineReport:
    return pipeline(pass_trace(w, plan, mp), w.macs, mp.alus)


def utilization(w: Workload, plan: TilingPlan, mp: MachineParams) -> float:
    """MACs over ALU-cycles of the modeled timeline; always in (0, 1]."""
    return simulate_pipeline(w, plan, mp).utilization


def steady_throughput(w: Workload, plan: TilingPlan, mp: MachineParams) -> float:
    """MACs per cycle once warm-up is ignored: each pass costs ``max(load, compute)``."""
    trace = pass_trace(w, plan, mp)
    return w.macs / sum(p.overlapped for p in trace)


# --- folding -----------------------------------------------------------------------------


def _fold_view(v: ViewSpec, axis: int, F: int) -> ViewSpec:
    n_p = v.n_p
    q = v.p_shape[axis] // F
    terms = []
    for t in v.terms:
        if t.component == axis:
            terms.append(ViewTerm(axis, t.axis, t.stride, t.offset))
            terms.append(ViewTerm(n_p, t.axis, t.stride * q, 0))
        elif t.component >= n_p:
            terms.append(ViewTerm(t.component + 1, t.axis, t.stride, t.offset))
        else:
            terms.append(t)
    p_shape = v.p_shape[:axis] + (q,) + v.p_shape[axis + 1 :]
    return ViewSpec(v.source_shape, p_shape, (F,) + v.a_shape, terms, v.boundary)


def _fold_program(prog: StrategyProgram, n_p: int, axis: int) -> StrategyProgram:
    segs = []
    for seg in prog.segments:
        new = []
        for ins in seg:
            if ins.op == "IDX":
                if ins.aux == axis:
                    raise IllegalInstruction("IDX reads the folded p axis; fold another axis")
                if ins.aux >= n_p:
                    ins = AluInstr(ins.op, ins.dst, ins.srcA, ins.srcB, ins.srcC, ins.shift, ins.aux + 1)
            new.append(ins)
        segs.append(new)
    segs = [[]] + segs + [[]]
    return StrategyProgram(prog.depth + 1, segs, prog.constants, prog.tables, prog.outputs, prog.fold_levels + 1)


def fold_axis(w: Workload, F: int, axis: Optional[int] = None) -> int:
    if axis is not None:
        if w.p_shape[axis] % F:
            raise Indivisible(f"p axis {axis} of extent {w.p_shape[axis]} is not divisible by {F}")
        return axis
    for i, e in enumerate(w.p_shape):
        if e % F == 0:
            return i
    raise Indivisible(f"no p axis of {w.p_shape} is divisible by {F}")


def fold(w: Workload, F: int, axis: Optional[int] = None) -> Workload:
    """Move a factor ``F`` of one p axis into a new outermost a level.

    Original index ``p_axis = f * (P / F) + q`` becomes ``(q, f)``; each
    ``f`` emits its own output slot, so results are unchanged after
    :func:`unfold_output`.
    """
    if F < 1:
        raise Indivisible("fold factor must be positive")
    if F == 1:
        return w
    axis = fold_axis(w, F, axis)
    return Workload(
        _fold_view(w.viewA, axis, F),
        _fold_view(w.viewB, axis, F),
        w.srcA,
        w.srcB,
        _fold_program(w.program, w.viewA.n_p, axis),
    )


def unfold_output(t: Tensor, original: Workload, F: int, axis: Optional[int] = None) -> Tensor:
    """Reshape a folded run's output back to the original workload's shape."""
    if F == 1:
        return t
    axis = fold_axis(original, F, axis)
    n_p = len(original.p_shape)
    arr = t.array()
    # folded layout: p' axes, then F, then the rest; move F in front of the folded axis
    arr = np.moveaxis(arr, n_p, axis)
    shape = list(arr.shape)
    merged = shape[:axis] + [shape[axis] * shape[axis + 1]] + shape[axis + 2 :]
    arr = arr.reshape(merged)
    return Tensor(original.output_shape, t.dtype, arr.reshape(original.output_shape))


def fold_plan(plan: TilingPlan, w: Workload, F: int, axis: Optional[int] = None) -> TilingPlan:
    """Tiling for the folded workload with the same lane count per pass and the full new level."""
    if F == 1:
        return plan
    axis = fold_axis(w, F, axis)
    folded_p = w.p_shape[axis] // F
    t_p = list(plan.t_p)
    t_p[axis] = min(t_p[axis], folded_p)
    return TilingPlan(tuple(t_p), (F,) + tuple(plan.t_a))


# --- reuse-rate comparison ------------------------------------------------------------------


@dataclass(frozen=True)
class ReuseRow:
    """Word counts of the form ``fixed + per_n * n``; ``n = None`` takes the limit."""

    name: str
    input_words: Tuple[float, float]
    kernel_words: Tuple[float, float]
    output_words: Tuple[float, float]
    macs: Tuple[float, float]
    reference: float

    def rate(self, n: Optional[float] = None) -> float:
        if n is None:
            in_slope = self.input_words[1] + self.kernel_words[1] + self.output_words[1]
            if self.macs[1] or in_slope:
                return reuse_rate(self.macs[1], self.input_words[1] + self.kernel_words[1], self.output_words[1])
            n = 0
        val = lambda pair: pair[0] + pair[1] * n  # noqa: E731
        return reuse_rate(val(self.macs), val(self.input_words) + val(self.kernel_words), val(self.output_words))

    def to_dict(self) -> dict:
        return {"name": self.name, "computed": round(self.rate(), 4), "reference": self.reference}


def reuse_table() -> List[ReuseRow]:
    """Per-pass word counts for a 3x3 CNN on a systolic array, Eyeriss and a 32-ALU MERIT unit."""
    alu = (16 * 3 * 4)  # Eyeriss per-ALU MACs
    return [
        ReuseRow("systolic 1 ALU", (1, 0), (1, 0), (1, 0), (1, 0), 0.33),
        ReuseRow("systolic overall", (0, 8), (128, 0), (0, 16), (0, 128), 5.33),
        ReuseRow("eyeriss 1 ALU", (3 * 4, 0), (16 * 3 * 4, 0), (16, 0), (alu, 0), 0.87),
        ReuseRow("eyeriss 1 pass", (3 * 4 * 16, 0), (16 * 3 * 4 * 3, 0), (16 * 14, 0), (alu * 3 * 14, 0), 8.12),
        ReuseRow("eyeriss overall", (0, 3 * 4 * 16), (16 * 3 * 4 * 3, 0), (0, 16 * 14), (0, alu * 3 * 14), 19.38),
        ReuseRow("merit-z", (18 * 10 * 8, 0), (3 * 3 * 8 * 16, 0), (0, 0), (3 * 3 * 8 * 16 * 8 * 16, 0), 78.77),
    ]
