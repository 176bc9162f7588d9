"""Functional model of the bank-to-ALU butterfly network.

Stage ``s`` pairs lines whose indices differ only in bit ``s``; each pair is
a 2x2 switch set to THROUGH or CROSS. Routing is destination-tag, least
significant bit first: after stage ``s`` a packet sits on the line whose bits
``0..s`` equal its destination's and whose higher bits still equal its
source's. A permutation is routable in one pass iff no two packets ever need
the same line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .layout import HashConfig, ScratchLayout, _log2, bank_of, column_addresses
from .tensor import Tensor, ndrange
from .view import ViewSpec, footprint_box, stage_box, view_gather

THROUGH, CROSS = "THROUGH", "CROSS"


@dataclass(frozen=True)
class ButterflyConfig:
    N: int
    stages: Tuple[Tuple[str, ...], ...]  # stage s: one setting per switch, by lower line index

    def switch_lines(self, s: int) -> List[int]:
        bit = 1 << s
        return [l for l in range(self.N) if not l & bit]

    def to_dict(self) -> dict:
        return {"N": self.N, "stages": [list(st) for st in self.stages]}


def _check_perm(n: int, perm: Sequence[int]) -> None:
    _log2(n)
    if len(perm) != n or sorted(int(v) for v in perm) != list(range(n)):
        raise ValueError(f"{list(perm)} is not a permutation of 0..{n - 1}")


def butterfly_route(N: int, perm: Sequence[int]) -> Optional[ButterflyConfig]:
    """Settings delivering bank ``perm[n]`` to ALU ``n``, or ``None`` if unroutable."""
    _check_perm(N, perm)
    stages = _log2(N)
    # packet for ALU n starts on line perm[n]
    line = [int(v) for v in perm]
    settings = []
    for s in range(stages):
        bit = 1 << s
        new = [(l & ~bit) | (n & bit) for n, l in enumerate(line)]
        if len(set(new)) != N:
            return None
        stage = []
        for low in range(N):
            if low & bit:
                continue
            # whichever packet entered the lower line decides the switch
            who = line.index(low)
            stage.append(THROUGH if new[who] == low else CROSS)
        settings.append(tuple(stage))
        line = new
    return ButterflyConfig(N, tuple(settings))


def deliver(cfg: ButterflyConfig, inputs: Sequence) -> list:
    """Push one value per input line through the configured switches."""
    vals = list(inputs)
    if len(vals) != cfg.N:
        raise ValueError(f"expected {cfg.N} inputs, got {len(vals)}")
    for s, stage in enumerate(cfg.stages):
        bit = 1 << s
        for low, setting in zip(cfg.switch_lines(s), stage):
            if setting == CROSS:
                vals[low], vals[low | bit] = vals[low | bit], vals[low]
    return vals


def is_xor_permutation(perm: Sequence[int]) -> bool:
    k = perm[0]
    return all(p == (n ^ k) for n, p in enumerate(perm))


def apply_bit_hash(addr: int, cfg: HashConfig, bank_bits: Optional[int] = None) -> int:
    if addr < 0:
        raise ValueError("addresses are non-negative")
    if bank_bits is not None and bank_bits != cfg.bank_bits:
        raise ValueError(f"hash yields {cfg.bank_bits} bank bits, not {bank_bits}")
    return cfg.apply(int(addr))


@dataclass(frozen=True)
class StepVerdict:
    step: int
    verdict: str  # "OK", "STALL" or "MISMATCH"
    banks: Tuple[int, ...]
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"step": self.step, "verdict": self.verdict, "banks": list(self.banks)}
        if self.reason:
            d["reason"] = self.reason
        return d


class BankedScratchpad:
    """Word ``A`` lives in bank ``hash(A)`` (or ``A mod N``) at row ``A >> log2 N``."""

    def __init__(self, banks: int, hash: Optional[HashConfig] = None):
        self.banks = banks
        self.bits = _log2(banks)
        self.hash = hash
        self.cells = {}

    def locate(self, addr: int) -> Tuple[int, int]:
        return int(bank_of(addr, self.banks, self.hash)), addr >> self.bits

    def store(self, addr: int, value) -> None:
        key = self.locate(addr)
        if key in self.cells and self.cells[key][0] != addr:
            raise ValueError(f"addresses {self.cells[key][0]} and {addr} collide at bank/row {key}")
        self.cells[key] = (addr, value)

    def read(self, bank: int, row: int):
        return self.cells[(bank, row)][1]


def simulate_fetch(spec: ViewSpec, src: Tensor, t_p: Sequence[int], t_a: Sequence[int], layout: ScratchLayout,
                   group: Sequence[Sequence[int]], banks: int, hash: Optional[HashConfig] = None,
                   k_start: Optional[Sequence[int]] = None) -> List[StepVerdict]:
    """Stage a tile into banks, route every a-step through the butterfly and check the data.

    ``len(group)`` ALUs must equal the bank count so every step is a
    bank-to-ALU permutation.
    """
    t_p, t_a = tuple(t_p), tuple(t_a)
    if len(group) != banks:
        raise ValueError(f"{len(group)} ALUs cannot form a permutation over {banks} banks")
    if k_start is None:
        k_start = (0,) * (len(t_p) + len(t_a))
    origin, fp = footprint_box(spec, k_start, t_p + t_a)
    box = stage_box(src, origin, fp.per_axis).reshape(fp.per_axis)
    pad = ScratchpadImage(layout, fp.per_axis, box)
    sram = BankedScratchpad(banks, hash)
    for addr, value in pad.words():
        sram.store(addr, value)
    addrs = column_addresses(spec, t_p, t_a, layout, group, k_start)
    out = []
    for step, (a, step_addrs) in enumerate(zip(ndrange(t_a), addrs)):
        located = [sram.locate(x) for x in step_addrs]
        bk = tuple(b for b, _ in located)
        if len(set(bk)) != banks:
            out.append(StepVerdict(step, "STALL", bk, "bank conflict"))
            continue
        cfg = butterfly_route(banks, bk)
        if cfg is None:
            out.append(StepVerdict(step, "STALL", bk, "unroutable"))
            continue
        bank_out = [None] * banks
        for b, r in located:
            bank_out[b] = sram.read(b, r)
        got = deliver(cfg, bank_out)
        want = [
            view_gather(spec, src, tuple(s + o for s, o in zip(k_start, tuple(p) + tuple(a))))
            for p in group
        ]
        if any(g != w for g, w in zip(got, want)):
            out.append(StepVerdict(step, "MISMATCH", bk, "delivered data differs from gather"))
        else:
            out.append(StepVerdict(step, "OK", bk))
    return out


class ScratchpadImage:
    """Addresses and values of a staged box under a layout."""

    def __init__(self, layout: ScratchLayout, extents: Sequence[int], box: np.ndarray):
        self.layout = layout
        self.extents = tuple(extents)
        self.box = box

    def words(self):
        for idx in np.ndindex(*self.extents):
            yield self.layout.address(self.extents, idx), self.box[idx].item()
