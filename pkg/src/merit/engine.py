"""Evaluate ``vec(C) = R(M(A), M(B), program)`` in full or tiled mode.

Tiled mode stages the footprint box of every input for each (p-tile, a-tile)
pass into a simulated scratchpad, serves all gathers from those boxes, and
keeps the per-lane register files alive across a-tiles (output stationary).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DivByZero, ScratchpadOverflow, UndefinedFootprint
from .rip import LaneMachine, StrategyProgram
from .tensor import Tensor, ndrange
from .view import Boundary, Gatherer, ViewSpec, footprint_box, p_lanes_for, stage_box

# bytes per input, one entry per read pipeline
DEFAULT_SCRATCHPAD_BYTES = (16384, 8192)


@dataclass(frozen=True)
class Workload:
    viewA: ViewSpec
    viewB: ViewSpec
    srcA: Tensor
    srcB: Tensor
    program: StrategyProgram

    def __post_init__(self):
        if self.viewA.p_shape != self.viewB.p_shape:
            raise ValueError(f"p shapes differ: {self.viewA.p_shape} vs {self.viewB.p_shape}")
        if self.viewA.a_shape != self.viewB.a_shape:
            raise ValueError(f"a shapes differ: {self.viewA.a_shape} vs {self.viewB.a_shape}")
        if self.program.depth != len(self.a_shape):
            raise ValueError(f"program depth {self.program.depth} != accumulation rank {len(self.a_shape)}")
        for name, v, t in (("A", self.viewA, self.srcA), ("B", self.viewB, self.srcB)):
            if tuple(t.shape) != v.source_shape:
                raise ValueError(f"source {name} has shape {t.shape}, view expects {v.source_shape}")
        if self.srcA.dtype != self.srcB.dtype:
            raise ValueError("both inputs must share one dtype")

    @property
    def p_shape(self) -> Tuple[int, ...]:
        return self.viewA.p_shape

    @property
    def a_shape(self) -> Tuple[int, ...]:
        return self.viewA.a_shape

    @property
    def dtype(self):
        return self.srcA.dtype

    @property
    def slot_shape(self) -> Tuple[int, ...]:
        return self.a_shape[: self.program.fold_levels]

    @property
    def output_shape(self) -> Tuple[int, ...]:
        shape = self.p_shape + self.slot_shape
        if self.program.outputs > 1:
            shape += (self.program.outputs,)
        return shape or (1,)

    @property
    def macs(self) -> int:
        return int(np.prod(self.p_shape, dtype=np.int64) * np.prod(self.a_shape, dtype=np.int64))


@dataclass(frozen=True)
class TilingPlan:
    """Tile extents; a-tiles are iterated innermost (output stationary).

    The a-tile must keep the global row-major accumulation order: for some
    axis ``j`` every earlier a-axis has tile 1 and every later one is full.
    """

    t_p: Tuple[int, ...]
    t_a: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "t_p", tuple(int(t) for t in self.t_p))
        object.__setattr__(self, "t_a", tuple(int(t) for t in self.t_a))

    def validate(self, w: Workload) -> None:
        if len(self.t_p) != len(w.p_shape) or len(self.t_a) != len(w.a_shape):
            raise ValueError(f"tile ranks {len(self.t_p)},{len(self.t_a)} do not match workload {w.p_shape},{w.a_shape}")
        for t, e in zip(self.t_p + self.t_a, w.p_shape + w.a_shape):
            if not 1 <= t <= e:
                raise ValueError(f"tile {self.t_p}/{self.t_a} does not fit {w.p_shape}/{w.a_shape}")
        if not order_preserving(self.t_a, w.a_shape):
            raise ValueError(f"a-tile {self.t_a} would reorder the accumulation over {w.a_shape}")

    @classmethod
    def full(cls, w: Workload) -> "TilingPlan":
        return cls(w.p_shape, w.a_shape)


def order_preserving(t_a: Sequence[int], a_shape: Sequence[int]) -> bool:
    """True if walking a-tiles in row-major order visits ``a`` in row-major order."""
    d = len(a_shape)
    for j in range(d + 1):
        if all(t_a[i] == 1 for i in range(j)) and all(t_a[i] == a_shape[i] for i in range(j + 1, d)):
            return True
    return d == 0


def order_preserving_tiles(a_shape: Sequence[int]) -> List[Tuple[int, ...]]:
    """Every a-tile shape that keeps row-major accumulation order."""
    out = set()
    d = len(a_shape)
    for j in range(d):
        for t in range(1, a_shape[j] + 1):
            out.add(tuple([1] * j + [t] + list(a_shape[j + 1 :])))
    if d == 0:
        out.add(())
    return sorted(out)


@dataclass
class TrafficReport:
    dram_read_words: Dict[str, int] = field(default_factory=dict)
    dram_write_words: int = 0
    scratchpad_peak_words: Dict[str, int] = field(default_factory=dict)
    passes: int = 0
    macs: int = 0

    @property
    def total_read_words(self) -> int:
        return sum(self.dram_read_words.values())

    def to_dict(self) -> dict:
        return {
            "dram_read_words": dict(self.dram_read_words),
            "dram_write_words": self.dram_write_words,
            "scratchpad_peak_words": dict(self.scratchpad_peak_words),
            "passes": self.passes,
            "macs": self.macs,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _finish(w: Workload, raw: np.ndarray) -> Tensor:
    """Convert machine outputs ``(P, slots, outputs)`` to the output tensor."""
    data = raw.reshape(w.output_shape)
    return Tensor(w.output_shape, w.dtype, data)


def run_full(w: Workload) -> Tensor:
    lanes = p_lanes_for(w.p_shape)
    n = int(np.prod(w.p_shape, dtype=np.int64))
    m = LaneMachine(w.program, w.a_shape, w.dtype, n, lanes)
    ga, gb = Gatherer(w.viewA, lanes), Gatherer(w.viewB, lanes)
    fa, fb = w.srcA.data, w.srcB.data
    for a in ndrange(w.a_shape):
        m.step(a, ga.gather(fa, a), gb.gather(fb, a))
    return _finish(w, m.result())


def _tile_starts(shape: Sequence[int], tile: Sequence[int]) -> Iterator[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
    """Row-major (start, clipped extent) of every tile covering ``shape``."""
    axes = [range(0, e, t) for e, t in zip(shape, tile)]
    for start in itertools.product(*axes):
        ext = tuple(min(t, e - s) for s, t, e in zip(start, tile, shape))
        yield start, ext


def run_tiled(w: Workload, plan: TilingPlan,
              capacity_bytes: Optional[Sequence[int]] = DEFAULT_SCRATCHPAD_BYTES) -> Tuple[Tensor, TrafficReport]:
    """Tiled execution with footprint staging; ``capacity_bytes=None`` means unlimited."""
    plan.validate(w)
    for v in (w.viewA, w.viewB):
        if v.boundary is Boundary.CLAMP:
            raise UndefinedFootprint("tiled execution needs footprint boxes, which CLAMP views lack")
    itemsize = w.dtype.numpy_dtype.itemsize
    report = TrafficReport(
        dram_read_words={"A": 0, "B": 0},
        scratchpad_peak_words={"A": 0, "B": 0},
        macs=w.macs,
    )
    n_slots = int(np.prod(w.slot_shape, dtype=np.int64))
    out = np.zeros(tuple(w.p_shape) + (n_slots, w.program.outputs),
                   dtype=np.int64 if w.dtype.is_fixed else np.float64)
    views = (("A", w.viewA, w.srcA), ("B", w.viewB, w.srcB))
    for p_start, p_ext in _tile_starts(w.p_shape, plan.t_p):
        lanes = p_lanes_for(w.p_shape, p_start, p_ext)
        n = int(np.prod(p_ext, dtype=np.int64))
        m = LaneMachine(w.program, w.a_shape, w.dtype, n, lanes)
        gathers = [Gatherer(v, lanes) for _, v, _ in views]
        for a_start, a_ext in _tile_starts(w.a_shape, plan.t_a):
            boxes = []
            for i, (name, v, src) in enumerate(views):
                origin, fp = footprint_box(v, p_start + a_start, p_ext + a_ext)
                words = fp.words
                if capacity_bytes is not None and words * itemsize > capacity_bytes[i]:
                    raise ScratchpadOverflow(
                        f"input {name} needs {words * itemsize} bytes, scratchpad holds {capacity_bytes[i]}"
                    )
                report.dram_read_words[name] += words
                report.scratchpad_peak_words[name] = max(report.scratchpad_peak_words[name], words)
                boxes.append((stage_box(src, origin, fp.per_axis), origin, fp.per_axis))
            report.passes += 1
            for a in ndrange(a_ext):
                a = tuple(s + o for s, o in zip(a_start, a))
                ports = [g.gather(buf, a, origin, ext) for g, (buf, origin, ext) in zip(gathers, boxes)]
                m.step(a, *ports)
        sl = tuple(slice(s, s + e) for s, e in zip(p_start, p_ext))
        out[sl] = m.result().reshape(tuple(p_ext) + (n_slots, w.program.outputs))
    report.dram_write_words = int(np.prod(w.output_shape, dtype=np.int64))
    return _finish(w, out), report


def traffic_naive_unrolled(w: Workload) -> int:
    """Words per input of the eagerly materialized (unrolled) view matrix."""
    return int(np.prod(w.p_shape, dtype=np.int64) * np.prod(w.a_shape, dtype=np.int64))


def reuse_rate(macs: float, in_words: float, out_words: float) -> float:
    denom = in_words + out_words
    if denom == 0:
        raise DivByZero("reuse rate needs a non-zero word count")
    return macs / denom
