"""Bank-conflict analysis for SIMD scratchpad reads.

When ``2**B`` ALUs read one word each per step, ALU ``n`` often reads

    A_n = A_0 + sum_i c_i * b_{n,i}

where ``b_{n,i}`` is bit ``i`` of ``n``. Whether those reads hit distinct
banks for *every* base ``A_0`` is summarised by a ternary property matrix
``H``: entry ``(r, j)`` says whether flipping ALU bit ``j`` always (``1``),
never (``0``) or only sometimes (``x``) flips address bit ``r``. If ``H``
reduces to the identity the pattern is conflict free; non-square matrices
can first be folded by a bit hash ``(X, R^t)``.

Matrices are stored as tuples of rows of the characters ``"0"``, ``"1"``
and ``"x"``; rows index address (or bank) bits, columns index ALU bits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import OutOfFootprint
from .tensor import ndrange
from .view import ViewSpec, footprint_box, source_coords

ZERO, ONE, X = "0", "1", "x"


# --- ternary logic ------------------------------------------------------------


def t_and(a: str, b: str) -> str:
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE and b == ONE:
        return ONE
    return X


def t_xor(a: str, b: str) -> str:
    if a == X or b == X:
        return X
    return ONE if a != b else ZERO


def t_not(a: str) -> str:
    return {ZERO: ONE, ONE: ZERO, X: X}[a]


@dataclass(frozen=True)
class TernaryMatrix:
    rows: Tuple[Tuple[str, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(str(v) for v in r) for r in self.rows)
        for r in rows:
            if any(v not in (ZERO, ONE, X) for v in r):
                raise ValueError(f"ternary entries must be 0, 1 or x, got {r}")
        if rows and len({len(r) for r in rows}) != 1:
            raise ValueError("ragged ternary matrix")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def parse(cls, text: Sequence[str]) -> "TernaryMatrix":
        """Build from row strings such as ``["100", "x10", "xx1"]``."""
        return cls(tuple(tuple(r.replace(" ", "")) for r in text))

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.rows), len(self.rows[0]) if self.rows else 0)

    def is_square(self) -> bool:
        return self.shape[0] == self.shape[1]

    def is_identity(self) -> bool:
        if not self.is_square():
            return False
        return all(v == (ONE if i == j else ZERO) for i, r in enumerate(self.rows) for j, v in enumerate(r))

    def to_lists(self) -> List[List[str]]:
        return [list(r) for r in self.rows]

    def __str__(self) -> str:
        return "\n".join(" ".join(r) for r in self.rows)


def identity(n: int) -> TernaryMatrix:
    return TernaryMatrix(tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n)))


# --- affine address patterns ----------------------------------------------------


@dataclass(frozen=True)
class AddressPattern:
    base: int
    coeffs: Tuple[int, ...]

    @property
    def alu_bits(self) -> int:
        return len(self.coeffs)

    def address(self, n: int) -> int:
        return self.base + sum(c for i, c in enumerate(self.coeffs) if (n >> i) & 1)

    def addresses(self) -> List[int]:
        return [self.address(n) for n in range(1 << self.alu_bits)]


def fit_affine_pattern(addresses: Sequence[int]) -> Optional[AddressPattern]:
    """Fit ``A_n = A_0 + sum c_i b_{n,i}``; ``None`` means irregular."""
    addresses = [int(a) for a in addresses]
    n = len(addresses)
    if n == 0 or n & (n - 1):
        return None
    bits = n.bit_length() - 1
    base = addresses[0]
    coeffs = tuple(addresses[1 << i] - base for i in range(bits))
    if any(c < 0 for c in coeffs):
        return None
    pat = AddressPattern(base, coeffs)
    if pat.addresses() != addresses:
        return None
    return pat


def default_address_bits(coeffs: Sequence[int]) -> int:
    return max(1, int(sum(coeffs)).bit_length())


def _alu_bit_table(b: int) -> np.ndarray:
    n = np.arange(1 << b, dtype=np.int64)
    return ((n[:, None] >> np.arange(b, dtype=np.int64)[None, :]) & 1) if b else np.zeros((1, 0), dtype=np.int64)


def property_matrix(coeffs: Sequence[int], m: Optional[int] = None) -> TernaryMatrix:
    """Ternary property matrix by exhaustive simulation over all bases in ``[0, 2**m)``."""
    c = np.asarray(coeffs, dtype=np.int64)
    b = len(c)
    if m is None:
        m = default_address_bits(coeffs)
    bits = _alu_bit_table(b)  # (2^b, b)
    bases = np.arange(1 << m, dtype=np.int64)[:, None]
    addr = bases + bits @ c  # (2^m, 2^b)
    rows = [[None] * b for _ in range(m)]
    for j in range(b):
        flipped = bases + (bits ^ (np.arange(b) == j)) @ c
        diff = addr ^ flipped
        for r in range(m):
            d = (diff >> r) & 1
            rows[r][j] = ONE if d.all() else ZERO if not d.any() else X
    return TernaryMatrix(tuple(tuple(r) for r in rows))


# --- reduction --------------------------------------------------------------------


@dataclass(frozen=True)
class Reduction:
    success: bool
    trace: Tuple[int, ...]  # pivot rows in order of use
    reason: Optional[str] = None
    final: Optional[TernaryMatrix] = None

    def to_dict(self) -> dict:
        d = {"success": self.success, "trace": list(self.trace)}
        if self.reason:
            d["reason"] = self.reason
        if self.final is not None:
            d["final"] = self.final.to_lists()
        return d


def reduce_to_identity(h: TernaryMatrix) -> Reduction:
    """Eliminate with pure rows (no ``x``): each pivot's NOT is ANDed into every other row."""
    if not h.is_square():
        return Reduction(False, (), "not square", h)
    rows = [list(r) for r in h.rows]
    used: List[int] = []
    while True:
        pivot = next((i for i, r in enumerate(rows) if i not in used and X not in r), None)
        if pivot is None:
            break
        used.append(pivot)
        mask = [t_not(v) for v in rows[pivot]]
        for i, r in enumerate(rows):
            if i != pivot:
                rows[i] = [t_and(v, mv) for v, mv in zip(r, mask)]
    final = TernaryMatrix(tuple(tuple(r) for r in rows))
    if final.is_identity():
        return Reduction(True, tuple(used), None, final)
    reason = "no pure row" if any(X in r for r in rows) else "not identity"
    return Reduction(False, tuple(used), reason, final)


# --- (X, R) bit hashing --------------------------------------------------------------


@dataclass(frozen=True)
class HashConfig:
    """``bank = R^t (X . address_bits)`` over GF(2).

    ``X`` is ``bank_bits x m``; ``R`` rotates rows so that new row ``i`` is
    old row ``(i + t) mod bank_bits``.
    """

    X: Tuple[Tuple[int, ...], ...]
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "X", tuple(tuple(int(v) for v in r) for r in self.X))

    @property
    def bank_bits(self) -> int:
        return len(self.X)

    @property
    def address_bits(self) -> int:
        return len(self.X[0]) if self.X else 0

    def is_legal(self) -> bool:
        for r, row in enumerate(self.X):
            if r >= len(row) or row[r] != 1:
                return False
            extra = [c for c, v in enumerate(row) if v and c != r]
            if len(extra) > 1 or any(c < r for c in extra):
                return False
        return True

    def apply(self, addr: int) -> int:
        b = self.bank_bits
        hashed = [0] * b
        for r, row in enumerate(self.X):
            v = 0
            for col, x in enumerate(row):
                if x:
                    v ^= (addr >> col) & 1
            hashed[r] = v
        return sum(hashed[(i + self.t) % b] << i for i in range(b))

    def apply_array(self, addr: np.ndarray) -> np.ndarray:
        b = self.bank_bits
        addr = np.asarray(addr, dtype=np.int64)
        hashed = []
        for row in self.X:
            v = np.zeros_like(addr)
            for col, x in enumerate(row):
                if x:
                    v ^= (addr >> col) & 1
            hashed.append(v)
        out = np.zeros_like(addr)
        for i in range(b):
            out |= hashed[(i + self.t) % b] << i
        return out

    def transform(self, h: TernaryMatrix) -> TernaryMatrix:
        """Ternary product ``R^t X H`` (addition XOR, multiplication AND)."""
        if h.shape[0] != self.address_bits:
            raise ValueError(f"X has {self.address_bits} columns but H has {h.shape[0]} rows")
        cols = h.shape[1]
        xh = []
        for row in self.X:
            acc = [ZERO] * cols
            for k, x in enumerate(row):
                if x:
                    acc = [t_xor(a, v) for a, v in zip(acc, h.rows[k])]
            xh.append(tuple(acc))
        b = len(xh)
        return TernaryMatrix(tuple(xh[(i + self.t) % b] for i in range(b)))

    def to_dict(self) -> dict:
        return {"X": [list(r) for r in self.X], "t": self.t}

    @classmethod
    def identity(cls, bank_bits: int, m: Optional[int] = None) -> "HashConfig":
        m = bank_bits if m is None else m
        return cls(tuple(tuple(1 if c == r else 0 for c in range(m)) for r in range(bank_bits)), 0)


def hash_candidates(bank_bits: int, m: int):
    """Every legal ``(X, t)`` in search order: row 0 outermost, then rotation."""
    options = [[None] + list(range(r + 1, m)) for r in range(bank_bits)]
    for choice in itertools.product(*options):
        X_ = tuple(tuple(1 if (c == r or c == extra) else 0 for c in range(m)) for r, extra in enumerate(choice))
        for t in range(bank_bits):
            yield HashConfig(X_, t)


def search_hash(h: TernaryMatrix, bank_bits: int) -> Optional[Tuple[HashConfig, TernaryMatrix, Reduction]]:
    """First ``(X, t)`` whose hashed matrix reduces to the identity, else ``None``."""
    m = h.shape[0]
    if m < bank_bits:
        raise ValueError(f"H has {m} rows, fewer than {bank_bits} bank bits")
    if h.shape[1] != bank_bits:
        return None
    for cfg in hash_candidates(bank_bits, m):
        hp = cfg.transform(h)
        red = reduce_to_identity(hp)
        if red.success:
            return cfg, hp, red
    return None


# --- ground-truth conflicts -------------------------------------------------------------


def bank_of(addr, banks: int, hash: Optional[HashConfig] = None):
    if hash is not None:
        if isinstance(addr, np.ndarray):
            return hash.apply_array(addr)
        return hash.apply(int(addr))
    return addr % banks


@dataclass
class ConflictReport:
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    bases: List[int] = field(default_factory=list)  # bases with at least one conflict
    conflict_free: bool = True

    def to_dict(self) -> dict:
        return {"pairs": [list(p) for p in self.pairs], "bases": list(self.bases), "conflict_free": self.conflict_free}


def _log2(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{n} is not a power of two")
    return n.bit_length() - 1


def bank_sequence(coeffs: Sequence[int], base: int, banks: int, hash: Optional[HashConfig] = None) -> List[int]:
    pat = AddressPattern(base, tuple(coeffs))
    return [int(bank_of(a, banks, hash)) for a in pat.addresses()]


def detect_conflicts(coeffs: Sequence[int], banks: int, hash: Optional[HashConfig] = None) -> ConflictReport:
    """Check every base ``A_0`` that can matter for the bank function."""
    bank_bits = _log2(banks)
    if hash is not None and hash.bank_bits != bank_bits:
        raise ValueError(f"hash yields {hash.bank_bits} bank bits, {banks} banks need {bank_bits}")
    m = hash.address_bits if hash is not None else bank_bits
    c = np.asarray(coeffs, dtype=np.int64)
    bits = _alu_bit_table(len(c))
    addr = np.arange(1 << m, dtype=np.int64)[:, None] + bits @ c
    bk = bank_of(addr, banks, hash)
    pairs, bad = set(), []
    for base in range(bk.shape[0]):
        row = bk[base]
        if len(np.unique(row)) == row.size:
            continue
        bad.append(base)
        for i in range(row.size):
            for j in range(i + 1, row.size):
                if row[i] == row[j]:
                    pairs.add((i, j))
    return ConflictReport(sorted(pairs), bad, not bad)


# --- scratchpad layouts and ALU groupings ------------------------------------------------


@dataclass(frozen=True)
class ScratchLayout:
    """Row-major placement of a staged box with row padding and an XOR swizzle.

    The last axis is the row; ``pitch = width + row_pad``. On odd rows the
    column index is XORed with ``xor_mask``.
    """

    row_pad: int = 0
    xor_mask: int = 0

    def pitch(self, extents: Sequence[int]) -> int:
        return int(extents[-1]) + self.row_pad

    def address(self, extents: Sequence[int], coords: Sequence[int]) -> int:
        row = 0
        for x, e in zip(coords[:-1], extents[:-1]):
            row = row * e + x
        col = coords[-1]
        if self.xor_mask and row % 2 == 1:
            col ^= self.xor_mask
        return row * self.pitch(extents) + col

    def valid_for(self, extents: Sequence[int]) -> bool:
        """The swizzle must keep every column inside its row."""
        width, pitch = int(extents[-1]), self.pitch(extents)
        return all((c ^ self.xor_mask) < pitch for c in range(width))

    def describe(self) -> str:
        if self.xor_mask:
            return f"xor mask {self.xor_mask}, pad {self.row_pad}"
        return f"pad {self.row_pad}" if self.row_pad else "row-major"


@dataclass(frozen=True)
class Grouping:
    """ALU bit ``i`` moves the thread along ``alu_bits[i] = (p_axis, bit)``."""

    alu_bits: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "alu_bits", tuple((int(a), int(b)) for a, b in self.alu_bits))

    def groups(self, t_p: Sequence[int]) -> List[List[Tuple[int, ...]]]:
        """All ALU groups covering the p-tile; group ``g`` lists each ALU's p offset."""
        others = [tb for tb in thread_bits(t_p) if tb not in self.alu_bits]
        out = []
        for g in range(1 << len(others)):
            base = [0] * len(t_p)
            for i, (axis, bit) in enumerate(others):
                if (g >> i) & 1:
                    base[axis] += 1 << bit
            members = []
            for n in range(1 << len(self.alu_bits)):
                p = list(base)
                for i, (axis, bit) in enumerate(self.alu_bits):
                    if (n >> i) & 1:
                        p[axis] += 1 << bit
                members.append(tuple(p))
            out.append(members)
        return out

    def first(self, t_p: Sequence[int]) -> List[Tuple[int, ...]]:
        return self.groups(t_p)[0]

    def label(self) -> str:
        """E.g. ``(p1.0,p0.0,p0.1)``: p-axis and bit moved by each ALU bit."""
        return "(" + ",".join(f"p{a}.{b}" for a, b in self.alu_bits) + ")"


def thread_bits(t_p: Sequence[int]) -> List[Tuple[int, int]]:
    """Bits of the p-tile, least significant of the row-major thread index first."""
    out = []
    for axis in reversed(range(len(t_p))):
        out.extend((axis, b) for b in range(_log2(int(t_p[axis]))))
    return out


def naive_grouping(t_p: Sequence[int], alus: int) -> Grouping:
    """Consecutive row-major threads per ALU group."""
    return Grouping(tuple(thread_bits(t_p)[: _log2(alus)]))


def column_addresses(spec: ViewSpec, t_p: Sequence[int], t_a: Sequence[int], layout: ScratchLayout,
                     group: Sequence[Sequence[int]], k_start: Optional[Sequence[int]] = None) -> List[List[int]]:
    """Scratchpad address read by each ALU at every a-step of a tile.

    The tile's footprint box is the scratchpad image; ``group[n]`` is ALU
    ``n``'s p offset inside the tile. Steps follow row-major a order.
    """
    t_p, t_a = tuple(t_p), tuple(t_a)
    if k_start is None:
        k_start = (0,) * (len(t_p) + len(t_a))
    origin, fp = footprint_box(spec, k_start, t_p + t_a)
    n_p = len(t_p)
    out = []
    for a in ndrange(t_a):
        step = []
        for p in group:
            if len(p) != n_p or any(not 0 <= pi < ti for pi, ti in zip(p, t_p)):
                raise OutOfFootprint(f"ALU offset {tuple(p)} lies outside the p-tile {t_p}")
            k = tuple(s + o for s, o in zip(k_start, tuple(p) + tuple(a)))
            x = source_coords(spec, k)
            rel = [xi - oi for xi, oi in zip(x, origin)]
            if any(not 0 <= r < e for r, e in zip(rel, fp.per_axis)):
                raise OutOfFootprint(f"read {x} escapes the footprint box at {origin} of {fp.per_axis}")
            step.append(layout.address(fp.per_axis, rel))
        out.append(step)
    return out


def step_conflicts(addresses: Sequence[Sequence[int]], banks: int, hash: Optional[HashConfig] = None) -> int:
    """Number of steps whose reads do not hit distinct banks."""
    bad = 0
    for step in addresses:
        bk = [int(bank_of(a, banks, hash)) for a in step]
        if len(set(bk)) != len(bk):
            bad += 1
    return bad


@dataclass
class LayoutCandidate:
    kind: str  # "padded", "xor" or "retile"
    layout: ScratchLayout
    grouping: Grouping
    waste_per_row: int
    coeffs: Optional[Tuple[int, ...]]
    reducible: Optional[bool]
    conflict_steps: int
    total_steps: int

    @property
    def conflict_free(self) -> bool:
        return self.conflict_steps == 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layout": self.layout.describe(),
            "grouping": self.grouping.label(),
            "waste_per_row": self.waste_per_row,
            "coeffs": list(self.coeffs) if self.coeffs is not None else None,
            "reducible": self.reducible,
            "conflict_steps": self.conflict_steps,
            "total_steps": self.total_steps,
            "conflict_free": self.conflict_free,
        }


def evaluate_layout(spec: ViewSpec, t_p, t_a, layout: ScratchLayout, grouping: Grouping, banks: int,
                    kind: str = "custom") -> LayoutCandidate:
    bank_bits = _log2(banks)
    conflicts = total = 0
    first_pattern = None
    for gi, group in enumerate(grouping.groups(t_p)):
        addrs = column_addresses(spec, t_p, t_a, layout, group)
        conflicts += step_conflicts(addrs, banks)
        total += len(addrs)
        if gi == 0:
            first_pattern = fit_affine_pattern(addrs[0])
    coeffs = first_pattern.coeffs if first_pattern else None
    reducible = None
    if coeffs is not None and len(coeffs) == bank_bits:
        reducible = reduce_to_identity(property_matrix(coeffs, bank_bits)).success
    return LayoutCandidate(kind, layout, grouping, layout.row_pad, coeffs, reducible, conflicts, total)


def generate_layouts(spec: ViewSpec, t_p: Sequence[int], t_a: Sequence[int], banks: int,
                     alus: Optional[int] = None, max_pad: Optional[int] = None) -> List[LayoutCandidate]:
    """Padded, XOR-swizzled and re-tiled candidates, each checked by simulation.

    ``t_p`` extents must be powers of two so ALU groups can be formed from
    thread-index bits.
    """
    alus = banks if alus is None else alus
    t_p, t_a = tuple(t_p), tuple(t_a)
    _, fp = footprint_box(spec, (0,) * (len(t_p) + len(t_a)), t_p + t_a)
    width = fp.per_axis[-1]
    max_pad = banks if max_pad is None else max_pad
    naive = naive_grouping(t_p, alus)
    out: List[LayoutCandidate] = []
    for pad in range(max_pad + 1):
        out.append(evaluate_layout(spec, t_p, t_a, ScratchLayout(pad), naive, banks, "padded"))
    pitch = 1
    while pitch < width:
        pitch *= 2
    for p2 in (pitch, pitch * 2):
        if p2 - width > max_pad:
            continue
        mask = 1
        while mask < p2:
            lay = ScratchLayout(p2 - width, mask)
            if lay.valid_for(fp.per_axis):
                out.append(evaluate_layout(spec, t_p, t_a, lay, naive, banks, "xor"))
            mask *= 2
    bits = thread_bits(t_p)
    seen = set()
    for combo in itertools.combinations(bits, _log2(alus)):
        # ALU bit order follows the address increment of each thread bit
        step0 = {tb: _bit_increment(spec, t_p, t_a, tb) for tb in combo}
        ordered = tuple(sorted(combo, key=lambda tb: (step0[tb], tb)))
        if ordered in seen:
            continue
        seen.add(ordered)
        out.append(evaluate_layout(spec, t_p, t_a, ScratchLayout(), Grouping(ordered), banks, "retile"))
    return out


def _bit_increment(spec, t_p, t_a, tb) -> int:
    axis, bit = tb
    p = [0] * len(t_p)
    p[axis] = 1 << bit
    addrs = column_addresses(spec, t_p, t_a, ScratchLayout(), [tuple([0] * len(t_p)), tuple(p)])
    return addrs[0][1] - addrs[0][0]
