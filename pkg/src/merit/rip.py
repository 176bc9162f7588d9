"""Ranged inner-product: a phase-segmented ALU program over a loop nest.

A program of depth ``D`` holds ``2D + 1`` instruction segments ordered::

    Pre_1 ... Pre_D, Body, Post_D ... Post_1

which is what a ``D``-deep nest of loops with a pre- and post-hook per level
runs. Instead of nesting, the index ``a`` is walked in flat row-major order and
each step runs one contiguous range of segments chosen from the index alone
(see :func:`phase_range`). The segments are concatenated into one instruction
stream with start/end address tables, so a step is a single slice.

Execution is SIMD over lanes: every lane (one per parallel index ``p``) owns
a private 16-entry register file; all lanes run the same instructions.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DivByZero, IllegalInstruction, LutRange, OutOfRange
from .tensor import FIX16_MAX, FIX16_MIN, REAL32, DType, ndrange

N_REGS = 16

OPS = ("ADD", "SUB", "L1", "MAC", "MAX", "MIN", "SEL", "BAND", "BOR", "BXOR", "BNOT", "IDX", "LUT", "MOVC", "DIV")
SHIFT_OPS = frozenset({"ADD", "SUB", "L1", "MAC"})
# number of register/port sources each op reads
_ARITY = {
    "ADD": 3, "SUB": 3, "L1": 3, "MAC": 3, "SEL": 3,
    "MAX": 2, "MIN": 2, "BAND": 2, "BOR": 2, "BXOR": 2, "DIV": 2,
    "BNOT": 1, "LUT": 1,
    "IDX": 0, "MOVC": 0,
}  # fmt: skip


@dataclass(frozen=True)
class AluInstr:
    op: str
    dst: str
    srcA: Optional[str] = None
    srcB: Optional[str] = None
    srcC: Optional[str] = None
    shift: int = 0
    aux: int = 0

    def to_dict(self) -> dict:
        d = {"op": self.op, "dst": self.dst}
        for name in ("srcA", "srcB", "srcC"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        if self.shift:
            d["shift"] = self.shift
        if self.aux:
            d["aux"] = self.aux
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AluInstr":
        return cls(d["op"], d["dst"], d.get("srcA"), d.get("srcB"), d.get("srcC"), int(d.get("shift", 0)), int(d.get("aux", 0)))

    def __str__(self) -> str:
        parts = [self.op, self.dst] + [s for s in (self.srcA, self.srcB, self.srcC) if s is not None]
        if self.shift:
            parts.append(f">>{self.shift}")
        if self.op in ("IDX", "LUT", "MOVC") or self.aux:
            parts.append(f"#{self.aux}")
        return " ".join(parts)


_ASM_TOKEN = re.compile(r"[,\s]+")


def asm(line: str) -> AluInstr:
    """Parse one instruction, e.g. ``"MAC r0 r0 a b >>8"`` or ``"LUT r4 r3 #0"``."""
    toks = [t for t in _ASM_TOKEN.split(line.strip()) if t]
    if not toks:
        raise IllegalInstruction("empty instruction")
    op = toks[0].upper()
    shift, aux, regs = 0, 0, []
    for t in toks[1:]:
        if t.startswith(">>"):
            shift = int(t[2:])
        elif t.startswith("#"):
            aux = int(t[1:])
        else:
            regs.append(t)
    if not regs:
        raise IllegalInstruction(f"missing destination in {line!r}")
    srcs = regs[1:] + [None] * (3 - len(regs[1:]))
    return AluInstr(op, regs[0], srcs[0], srcs[1], srcs[2], shift, aux)


def asm_block(text: str) -> List[AluInstr]:
    """Assemble ``;``- or newline-separated instructions."""
    return [asm(line) for line in re.split(r"[;\n]", text) if line.strip()]


@dataclass(frozen=True)
class LookupTable:
    """Uniformly sampled function on ``[lo, hi]`` with linear interpolation."""

    samples: Tuple[float, ...]
    lo: float
    hi: float
    extrapolate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 2:
            raise ValueError("a lookup table needs at least two samples")
        if not self.hi > self.lo:
            raise ValueError("lookup range must satisfy hi > lo")

    def to_dict(self) -> dict:
        return {"samples": list(self.samples), "lo": self.lo, "hi": self.hi, "extrapolate": self.extrapolate}

    @classmethod
    def from_dict(cls, d: dict) -> "LookupTable":
        return cls(tuple(d["samples"]), d["lo"], d["hi"], bool(d.get("extrapolate", False)))


@dataclass(frozen=True)
class StrategyProgram:
    depth: int
    segments: Tuple[Tuple[AluInstr, ...], ...]
    constants: Tuple[float, ...] = ()
    tables: Tuple[LookupTable, ...] = ()
    outputs: int = 1
    # leading a-levels that index output slots instead of being reduced (set by folding)
    fold_levels: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(tuple(s) for s in self.segments))
        object.__setattr__(self, "constants", tuple(self.constants))
        object.__setattr__(self, "tables", tuple(self.tables))
        self.validate()

    @classmethod
    def build(cls, pre: Sequence, body, post: Sequence, **kw) -> "StrategyProgram":
        """Build from ``pre = [Pre_1..Pre_D]``, ``body``, ``post = [Post_1..Post_D]``.

        Each segment may be a list of instructions or assembler text.
        """

        def seg(s):
            return asm_block(s) if isinstance(s, str) else list(s)

        if len(pre) != len(post):
            raise IllegalInstruction("pre and post must have one segment per loop level")
        segs = [seg(s) for s in pre] + [seg(body)] + [seg(s) for s in reversed(post)]
        return cls(depth=len(pre), segments=segs, **kw)

    def validate(self) -> None:
        if self.depth < 0:
            raise IllegalInstruction("negative depth")
        if len(self.segments) != 2 * self.depth + 1:
            raise IllegalInstruction(f"depth {self.depth} needs {2 * self.depth + 1} segments, got {len(self.segments)}")
        if self.outputs < 0:
            raise IllegalInstruction("negative output count")
        if not 0 <= self.fold_levels <= self.depth:
            raise IllegalInstruction("fold_levels must lie in 0..depth")
        for seg in self.segments:
            for ins in seg:
                _check_instr(ins, self)

    # one instruction stream plus start/end address tables per segment
    def flattened(self) -> Tuple[Tuple[AluInstr, ...], Tuple[int, ...], Tuple[int, ...]]:
        stream, starts, ends = [], [], []
        for seg in self.segments:
            starts.append(len(stream))
            stream.extend(seg)
            ends.append(len(stream))
        return tuple(stream), tuple(starts), tuple(ends)

    def to_dict(self) -> dict:
        d = {
            "depth": self.depth,
            "segments": [[i.to_dict() for i in seg] for seg in self.segments],
            "constants": list(self.constants),
            "tables": [t.to_dict() for t in self.tables],
            "outputs": self.outputs,
        }
        if self.fold_levels:
            d["fold_levels"] = self.fold_levels
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyProgram":
        return cls(
            depth=int(d["depth"]),
            segments=[[AluInstr.from_dict(i) for i in seg] for seg in d["segments"]],
            constants=tuple(d.get("constants", ())),
            tables=tuple(LookupTable.from_dict(t) for t in d.get("tables", ())),
            outputs=int(d.get("outputs", 1)),
            fold_levels=int(d.get("fold_levels", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StrategyProgram":
        return cls.from_dict(json.loads(text))


def _operand(ref: str):
    if ref in ("a", "b"):
        return (ref, 0)
    m = re.fullmatch(r"([roc])(\d+)", ref or "")
    if not m:
        raise IllegalInstruction(f"bad operand {ref!r}")
    return (m.group(1), int(m.group(2)))


def _check_instr(ins: AluInstr, prog: StrategyProgram) -> None:
    if ins.op not in OPS:
        raise IllegalInstruction(f"unknown op {ins.op!r}")
    if ins.shift and ins.op not in SHIFT_OPS:
        raise IllegalInstruction(f"{ins.op} takes no shift")
    if not 0 <= ins.shift <= 15:
        raise IllegalInstruction(f"shift {ins.shift} outside 0..15")
    kind, idx = _operand(ins.dst)
    if kind == "r" and idx >= N_REGS:
        raise IllegalInstruction(f"register {ins.dst} >= r{N_REGS}")
    if kind == "o" and idx >= prog.outputs:
        raise IllegalInstruction(f"output {ins.dst} beyond declared {prog.outputs}")
    if kind not in ("r", "o"):
        raise IllegalInstruction(f"cannot write {ins.dst}")
    srcs = (ins.srcA, ins.srcB, ins.srcC)[: _ARITY[ins.op]]
    for s in srcs:
        if s is None:
            raise IllegalInstruction(f"{ins.op} needs {_ARITY[ins.op]} sources")
        kind, idx = _operand(s)
        if kind == "r" and idx >= N_REGS:
            raise IllegalInstruction(f"register {s} >= r{N_REGS}")
        if kind == "o":
            raise IllegalInstruction("output ports are write-only")
        if kind == "c" and idx >= len(prog.constants):
            raise IllegalInstruction(f"constant {s} not in pool")
    if ins.op == "LUT" and not 0 <= ins.aux < len(prog.tables):
        raise IllegalInstruction(f"table #{ins.aux} not defined")
    if ins.op == "MOVC" and not 0 <= ins.aux < len(prog.constants):
        raise IllegalInstruction(f"constant #{ins.aux} not in pool")


# --- phase selection ------------------------------------------------------------


def segment_name(depth: int, idx: int) -> str:
    if idx < depth:
        return f"Pre_{idx + 1}"
    if idx == depth:
        return "Body"
    return f"Post_{2 * depth - idx + 1}"


def phase_range(a_shape: Sequence[int], k: Sequence[int]) -> Tuple[int, int]:
    """Inclusive ``(first, last)`` segment indices executed at index ``k``.

    ``first`` is ``Pre_{D-m+1}`` where ``m`` counts trailing components at 0;
    ``last`` is ``Post_{D-M+1}`` where ``M`` counts trailing components at
    their maximum. With segments numbered ``Pre_1 = 0`` .. ``Post_1 = 2D``
    these are simply ``D - m`` and ``D + M``.
    """
    depth = len(a_shape)
    if len(k) != depth:
        raise OutOfRange(f"index {tuple(k)} does not match depth {depth}")
    for kj, e in zip(k, a_shape):
        if not 0 <= kj < e:
            raise OutOfRange(f"index {tuple(k)} outside {tuple(a_shape)}")
    m = 0
    for kj in reversed(k):
        if kj != 0:
            break
        m += 1
    big_m = 0
    for kj, e in zip(reversed(k), reversed(a_shape)):
        if kj != e - 1:
            break
        big_m += 1
    return depth - m, depth + big_m


def phase_sequence(a_shape: Sequence[int]) -> List[Tuple[tuple, str]]:
    """Flattened ``(k, segment)`` call order over the whole index range."""
    depth = len(a_shape)
    out = []
    for k in ndrange(a_shape):
        first, last = phase_range(a_shape, k)
        out.extend((k, segment_name(depth, s)) for s in range(first, last + 1))
    return out


# --- ALU ------------------------------------------------------------------------


def _sat(x):
    return np.clip(x, FIX16_MIN, FIX16_MAX)


def alu_op(op: str, a, b=0, c=0, s: int = 0, dtype: DType = REAL32):
    """One ALU operation on scalars or lane arrays.

    REAL32 treats ``>> s`` as a multiply by ``2**-s``. FIX16 works on raw
    codes: wide intermediates, arithmetic (floor) shift, saturation to 16
    bits on the result. IDX, LUT and MOVC need program context and are
    handled by the interpreter.
    """
    fixed = dtype.is_fixed
    if fixed:
        a, b, c = (np.asarray(v, dtype=np.int64) for v in (a, b, c))
    else:
        a, b, c = (np.asarray(v, dtype=np.float64) for v in (a, b, c))
    scale = 2.0 ** -s
    if op == "ADD":
        r = a + ((b + c) >> s) if fixed else a + (b + c) * scale
    elif op == "SUB":
        r = a + ((b - c) >> s) if fixed else a + (b - c) * scale
    elif op == "L1":
        r = a + (np.abs(b - c) >> s) if fixed else a + np.abs(b - c) * scale
    elif op == "MAC":
        r = a + ((b * c) >> s) if fixed else a + (b * c) * scale
    elif op == "MAX":
        r = np.maximum(a, b)
    elif op == "MIN":
        r = np.minimum(a, b)
    elif op == "SEL":
        r = np.where(a != 0, b, c)
    elif op in ("BAND", "BOR", "BXOR", "BNOT"):
        ia = a if fixed else np.trunc(a).astype(np.int64)
        ib = b if fixed else np.trunc(b).astype(np.int64)
        if op == "BAND":
            r = ia & ib
        elif op == "BOR":
            r = ia | ib
        elif op == "BXOR":
            r = ia ^ ib
        else:
            r = ~ia
        if not fixed:
            r = r.astype(np.float64)
    elif op == "DIV":
        if fixed:
            raise IllegalInstruction("DIV is REAL32-only; use a reciprocal LUT in FIX16")
        if np.any(b == 0):
            raise DivByZero("division by zero")
        r = a / b
    else:
        raise IllegalInstruction(f"{op} is not a pure ALU op")
    if fixed:
        r = _sat(r)
    return r if np.ndim(r) else r.item()


def lut_eval(table: LookupTable, x, dtype: DType = REAL32):
    """Linear interpolation over uniform samples; raises outside the range
    unless the table extrapolates linearly from its end segments."""
    fixed = dtype.is_fixed
    n = len(table.samples)
    if fixed:
        x = np.asarray(x, dtype=np.int64)
        samples = np.asarray(table.samples, dtype=np.int64)
        lo, hi = int(table.lo), int(table.hi)
    else:
        x = np.asarray(x, dtype=np.float64)
        samples = np.asarray(table.samples, dtype=np.float64)
        lo, hi = float(table.lo), float(table.hi)
    outside = (x < lo) | (x > hi)
    if np.any(outside) and not table.extrapolate:
        raise LutRange(f"lookup input outside [{table.lo}, {table.hi}]")
    span = hi - lo
    if fixed:
        num = (x - lo) * (n - 1)
        seg = np.clip(num // span, 0, n - 2)
        rem = num - seg * span  # may leave [0, span) only when extrapolating
        y0, y1 = samples[seg], samples[seg + 1]
        r = _sat(y0 + ((y1 - y0) * rem) // span)
    else:
        pos = (x - lo) * (n - 1) / span
        seg = np.clip(np.floor(pos), 0, n - 2).astype(np.int64)
        frac = pos - seg
        y0, y1 = samples[seg], samples[seg + 1]
        r = y0 + (y1 - y0) * frac
    return r if np.ndim(r) else r.item()


# --- interpreter ----------------------------------------------------------------


def _decode(ins: AluInstr):
    srcs = tuple(_operand(s) for s in (ins.srcA, ins.srcB, ins.srcC)[: _ARITY[ins.op]])
    return ins.op, _operand(ins.dst), srcs, ins.shift, ins.aux


class LaneMachine:
    """Register state for a batch of lanes executing one program.

    The state persists between :meth:`step` calls, so a caller may feed the
    a-range in several chunks (tiled execution) as long as the global
    row-major order is kept.
    """

    def __init__(self, prog: StrategyProgram, a_shape: Sequence[int], dtype: DType, lanes: int,
                 p_lanes: Sequence[np.ndarray] = ()):
        a_shape = tuple(a_shape)
        if prog.depth != len(a_shape):
            raise IllegalInstruction(f"program depth {prog.depth} != accumulation rank {len(a_shape)}")
        self.prog = prog
        self.a_shape = a_shape
        self.dtype = dtype
        self.fixed = dtype.is_fixed
        self.lanes = lanes
        self.p_lanes = [np.asarray(p, dtype=np.int64) for p in p_lanes]
        self.n_p = len(self.p_lanes)
        stream, self.starts, self.ends = prog.flattened()
        self.code = [_decode(i) for i in stream]
        if self.fixed and any(op == "DIV" for op, *_ in self.code):
            raise IllegalInstruction("DIV is REAL32-only; use a reciprocal LUT in FIX16")
        for op, _, _, _, aux in self.code:
            if op == "IDX" and not 0 <= aux < self.n_p + len(a_shape):
                raise IllegalInstruction(f"IDX #{aux} names no index component")
        num = np.int64 if self.fixed else np.float64
        self.num = num
        self.regs = np.zeros((N_REGS, lanes), dtype=num)
        self.slot_shape = a_shape[: prog.fold_levels]
        n_slots = int(np.prod(self.slot_shape, dtype=np.int64))
        self.out = np.zeros((lanes, n_slots, prog.outputs), dtype=num)
        consts = np.asarray(prog.constants, dtype=num) if prog.constants else np.zeros(0, dtype=num)
        if self.fixed and consts.size:
            consts = _sat(consts)
        self.consts = consts

    def step(self, a: Sequence[int], port_a, port_b) -> None:
        first, last = phase_range(self.a_shape, a)
        lo, hi = self.starts[first], self.ends[last]
        if lo == hi:
            return
        regs, fixed, dt = self.regs, self.fixed, self.dtype
        slot = 0
        for lvl in range(self.prog.fold_levels):
            slot = slot * self.a_shape[lvl] + a[lvl]
        ports = {"a": np.asarray(port_a, dtype=self.num), "b": np.asarray(port_b, dtype=self.num)}

        def read(src):
            kind, idx = src
            if kind == "r":
                return regs[idx]
            if kind == "c":
                return self.consts[idx]
            return ports[kind]

        for op, (dkind, didx), srcs, shift, aux in self.code[lo:hi]:
            if op == "IDX":
                if aux < self.n_p:
                    val = self.p_lanes[aux]
                else:
                    val = a[aux - self.n_p]
                val = _sat(val) if fixed else val
            elif op == "MOVC":
                val = self.consts[aux]
            elif op == "LUT":
                val = lut_eval(self.prog.tables[aux], read(srcs[0]), dt)
            else:
                args = [read(s) for s in srcs]
                val = alu_op(op, *args, s=shift, dtype=dt)
            if dkind == "r":
                regs[didx] = val
            else:
                self.out[:, slot, didx] = val

    def result(self) -> np.ndarray:
        """Emitted values, shape ``(lanes, slots, outputs)``."""
        return self.out


def rip_execute(prog: StrategyProgram, a_shape: Sequence[int], feedA: Callable, feedB: Callable,
                dtype: DType = REAL32, p_index: Sequence[int] = ()) -> List:
    """Run a program for a single lane, pulling port values from callables.

    ``feedA(k)`` and ``feedB(k)`` receive the accumulation index tuple.
    Returns the emitted values as a flat list (slot-major).
    """
    p_lanes = [np.asarray([v]) for v in p_index]
    m = LaneMachine(prog, a_shape, dtype, 1, p_lanes)
    for k in ndrange(a_shape):
        m.step(k, [feedA(k)], [feedB(k)])
    out = m.result()[0].reshape(-1)
    return [v.item() for v in out]
