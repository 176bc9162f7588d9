"""Declarative gather views.

A view maps a concatenated index ``k = (p, a)`` onto a source tensor. Every
term moves one component ``k_j`` along source axis ``d_j`` with stride
``s_j`` and offset ``o_j``; contributions landing on the same axis add up::

    x_i = sum_j [d_j == i] * (k_j * s_j + o_j)

The viewed element is ``src[x]``. Out-of-range coordinates are resolved by the
view's boundary mode.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import NegativeStride, OutOfFootprint, OutOfRange, UndefinedFootprint
from .tensor import Tensor, ndrange


class Boundary(str, enum.Enum):
    ZERO_PAD = "ZERO_PAD"
    CLAMP = "CLAMP"
    REJECT = "REJECT"


@dataclass(frozen=True)
class ViewTerm:
    component: int
    axis: int
    stride: int = 1
    offset: int = 0


@dataclass(frozen=True)
class ViewSpec:
    source_shape: Tuple[int, ...]
    p_shape: Tuple[int, ...]
    a_shape: Tuple[int, ...]
    terms: Tuple[ViewTerm, ...]
    boundary: Boundary = Boundary.ZERO_PAD

    def __post_init__(self):
        object.__setattr__(self, "source_shape", tuple(int(s) for s in self.source_shape))
        object.__setattr__(self, "p_shape", tuple(int(s) for s in self.p_shape))
        object.__setattr__(self, "a_shape", tuple(int(s) for s in self.a_shape))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def k_shape(self) -> Tuple[int, ...]:
        return self.p_shape + self.a_shape

    @property
    def n_p(self) -> int:
        return len(self.p_shape)

    def rows(self) -> int:
        return int(np.prod(self.p_shape, dtype=np.int64))

    def cols(self) -> int:
        return int(np.prod(self.a_shape, dtype=np.int64))

    def terms_on(self, axis: int) -> List[ViewTerm]:
        return [t for t in self.terms if t.axis == axis]

    # -- serialization --

    def to_dict(self) -> dict:
        return {
            "source_shape": list(self.source_shape),
            "p_shape": list(self.p_shape),
            "a_shape": list(self.a_shape),
            "terms": [
                {"component": t.component, "axis": t.axis, "stride": t.stride, "offset": t.offset}
                for t in self.terms
            ],
            "boundary": self.boundary.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSpec":
        return cls(
            source_shape=d["source_shape"],
            p_shape=d["p_shape"],
            a_shape=d["a_shape"],
            terms=[
                ViewTerm(int(t["component"]), int(t["axis"]), int(t.get("stride", 1)), int(t.get("offset", 0)))
                for t in d["terms"]
            ],
            boundary=d.get("boundary", "ZERO_PAD"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ViewSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Footprint:
    per_axis: Tuple[int, ...]

    @property
    def words(self) -> int:
        return int(np.prod(self.per_axis, dtype=np.int64))


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    term: Optional[int] = None
    component: Optional[int] = None


# --- gathering ----------------------------------------------------------------


def source_coords(spec: ViewSpec, k: Sequence[int]) -> Tuple[int, ...]:
    """Unbounded source coordinates for the concatenated index ``k``."""
    x = [0] * len(spec.source_shape)
    for t in spec.terms:
        x[t.axis] += k[t.component] * t.stride + t.offset
    return tuple(x)


def _check_k(spec: ViewSpec, k: Sequence[int]) -> None:
    if len(k) != len(spec.k_shape):
        raise OutOfRange(f"index has {len(k)} components, view expects {len(spec.k_shape)}")
    for kj, ext in zip(k, spec.k_shape):
        if not 0 <= kj < ext:
            raise OutOfRange(f"index {tuple(k)} outside (p, a) range {spec.k_shape}")


def view_gather(spec: ViewSpec, src: Tensor, k: Sequence[int]):
    """Element of the virtual tensor at ``k = p + a`` (flat tuple)."""
    if tuple(src.shape) != spec.source_shape:
        raise ValueError(f"source shape {src.shape} != view source shape {spec.source_shape}")
    k = tuple(k)
    _check_k(spec, k)
    x = source_coords(spec, k)
    inside = all(0 <= xi < e for xi, e in zip(x, spec.source_shape))
    if not inside:
        if spec.boundary is Boundary.ZERO_PAD:
            return src.data.dtype.type(0).item()
        if spec.boundary is Boundary.REJECT:
            raise OutOfRange(f"view reads {x} outside source {spec.source_shape}")
        x = tuple(min(max(xi, 0), e - 1) for xi, e in zip(x, spec.source_shape))
    return src.at(x)


class Gatherer:
    """Vectorized gathers for a fixed set of p lanes.

    The p-dependent part of every source coordinate is computed once; each
    a-step then adds a scalar per axis.
    """

    def __init__(self, spec: ViewSpec, p_lanes: Sequence[np.ndarray]):
        self.spec = spec
        n_p = spec.n_p
        lanes = len(p_lanes[0]) if n_p else 1
        self.lanes = lanes
        self.base = [np.zeros(lanes, dtype=np.int64) for _ in spec.source_shape]
        self.a_terms = []
        for t in spec.terms:
            if t.component < n_p:
                self.base[t.axis] += p_lanes[t.component].astype(np.int64) * t.stride + t.offset
            else:
                self.a_terms.append((t.axis, t.component - n_p, t.stride, t.offset))
        self.shape = np.asarray(spec.source_shape, dtype=np.int64)

    def coords(self, a: Sequence[int]) -> List[np.ndarray]:
        shift = [0] * len(self.base)
        for axis, comp, stride, offset in self.a_terms:
            shift[axis] += a[comp] * stride + offset
        return [b + s for b, s in zip(self.base, shift)]

    def gather(self, flat: np.ndarray, a: Sequence[int], origin=None, box=None) -> np.ndarray:
        """Gather lanes at a-index ``a``.

        ``flat`` is the row-major source; when ``origin``/``box`` are given
        it is a staged sub-box of the source instead, and reads are served
        from it (zero cells of the box stand in for ZERO_PAD fills).
        """
        x = self.coords(a)
        shape = self.shape
        valid = np.ones(self.lanes, dtype=bool)
        for xi, e in zip(x, shape):
            valid &= (xi >= 0) & (xi < e)
        all_valid = bool(valid.all())
        if not all_valid:
            if self.spec.boundary is Boundary.REJECT:
                bad = int(np.argmin(valid))
                raise OutOfRange(f"view reads {tuple(int(xi[bad]) for xi in x)} outside source {tuple(shape)}")
            if self.spec.boundary is Boundary.CLAMP:
                x = [np.clip(xi, 0, e - 1) for xi, e in zip(x, shape)]
                all_valid = True
        if origin is not None:
            x = [xi - o for xi, o in zip(x, origin)]
            shape = box
            for xi, e in zip(x, shape):
                if xi.size and (xi.min() < 0 or xi.max() >= e):
                    raise OutOfFootprint("gather escaped the staged footprint box")
        idx = np.zeros(self.lanes, dtype=np.int64)
        for xi, e in zip(x, shape):
            idx = idx * int(e) + (xi if all_valid else np.where(valid, xi, 0))
        out = flat[idx]
        if not all_valid:
            out = np.where(valid, out, 0).astype(flat.dtype)
        return out


def p_lanes_for(p_shape: Sequence[int], p_start=None, p_extent=None) -> List[np.ndarray]:
    """Row-major lane coordinates of a p box (default: the whole p range)."""
    p_start = tuple(p_start) if p_start is not None else (0,) * len(p_shape)
    p_extent = tuple(p_extent) if p_extent is not None else tuple(p_shape)
    if not p_shape:
        return []
    grids = np.meshgrid(*[np.arange(s, s + e, dtype=np.int64) for s, e in zip(p_start, p_extent)], indexing="ij")
    return [g.reshape(-1) for g in grids]


def view_materialize(spec: ViewSpec, src: Tensor) -> Tensor:
    """Eagerly build the (rows = prod p, cols = prod a) matrix of the view."""
    if tuple(src.shape) != spec.source_shape:
        raise ValueError(f"source shape {src.shape} != view source shape {spec.source_shape}")
    g = Gatherer(spec, p_lanes_for(spec.p_shape))
    cols = [g.gather(src.data, a) for a in ndrange(spec.a_shape)]
    mat = np.stack(cols, axis=1)
    return Tensor((spec.rows(), max(spec.cols(), 1)), src.dtype, mat)


# --- footprints ---------------------------------------------------------------


def _check_footprint_defined(spec: ViewSpec) -> None:
    for i, t in enumerate(spec.terms):
        if t.stride < 0:
            raise NegativeStride(f"term {i} has stride {t.stride}; footprint box undefined")
    if spec.boundary is Boundary.CLAMP:
        raise UndefinedFootprint("footprint of a CLAMP view is undefined")


def footprint(spec: ViewSpec, t_p: Sequence[int], t_a: Sequence[int]) -> Footprint:
    """Extents of the minimal source box covering a ``(t_p, t_a)`` tile."""
    tile = tuple(t_p) + tuple(t_a)
    if len(tile) != len(spec.k_shape):
        raise ValueError(f"tile rank {len(tile)} != view index rank {len(spec.k_shape)}")
    for t, e in zip(tile, spec.k_shape):
        if not 1 <= t <= e:
            raise ValueError(f"tile {tile} does not fit (p, a) range {spec.k_shape}")
    _check_footprint_defined(spec)
    per_axis = [1] * len(spec.source_shape)
    for term in spec.terms:
        per_axis[term.axis] += (tile[term.component] - 1) * term.stride
    return Footprint(tuple(per_axis))


def footprint_box(spec: ViewSpec, k_start: Sequence[int], tile: Sequence[int]) -> Tuple[Tuple[int, ...], Footprint]:
    """Origin (in unbounded source coordinates) and extents of a tile's box."""
    _check_footprint_defined(spec)
    origin = source_coords(spec, k_start)
    per_axis = [1] * len(spec.source_shape)
    for term in spec.terms:
        per_axis[term.axis] += (tile[term.component] - 1) * term.stride
    return origin, Footprint(tuple(per_axis))


def stage_box(src: Tensor, origin: Sequence[int], extents: Sequence[int]) -> np.ndarray:
    """Copy a source box into a flat buffer; cells outside the source read 0."""
    box = np.zeros(tuple(extents), dtype=src.data.dtype)
    arr = src.array()
    dst_sl, src_sl = [], []
    for o, e, n in zip(origin, extents, src.shape):
        lo, hi = max(o, 0), min(o + e, n)
        if hi <= lo:
            return box.reshape(-1)
        src_sl.append(slice(lo, hi))
        dst_sl.append(slice(lo - o, hi - o))
    box[tuple(dst_sl)] = arr[tuple(src_sl)]
    return box.reshape(-1)


# --- validation ---------------------------------------------------------------


def is_regular(spec: ViewSpec) -> bool:
    used = {t.component for t in spec.terms}
    return all(j in used for j in range(len(spec.k_shape)))


def validate_spec(spec: ViewSpec) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    rank = len(spec.source_shape)
    n_k = len(spec.k_shape)
    for name, shape in (("source", spec.source_shape), ("p", spec.p_shape), ("a", spec.a_shape)):
        if any(e < 1 for e in shape):
            diags.append(Diagnostic("BAD_EXTENT", f"{name} shape {shape} has a non-positive extent"))
    for i, t in enumerate(spec.terms):
        if not 0 <= t.axis < rank:
            diags.append(Diagnostic("AXIS_OUT_OF_RANGE", f"term {i} targets axis {t.axis} of a rank-{rank} source", term=i))
        if not 0 <= t.component < n_k:
            diags.append(
                Diagnostic("COMPONENT_OUT_OF_RANGE", f"term {i} reads component {t.component} of {n_k}", term=i)
            )
    used = {t.component for t in spec.terms}
    for j in range(spec.n_p, n_k):
        if j not in used:
            diags.append(
                Diagnostic("INFO_BROADCAST", f"accumulation component {j} has no term; value repeats along it", component=j)
            )
    return diags


def spec_errors(spec: ViewSpec) -> List[Diagnostic]:
    return [d for d in validate_spec(spec) if not d.code.startswith("INFO")]
