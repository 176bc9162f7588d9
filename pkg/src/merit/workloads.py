"""Workload templates (views + programs) and direct-loop reference oracles.

Every template has a builder returning an :class:`~merit.engine.Workload` and
an oracle computing the same result with plain nested loops. Oracles never
touch views or the instruction interpreter; they only share the lookup-table
samples so that quantized results can be compared exactly.

FIX16 arithmetic in the oracles mirrors the ALU: every accumulation step is
``sat(acc + ((x * y) >> frac_bits))`` with a floor shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .engine import Workload
from .errors import BadParams, UnknownTemplate
from .rip import LookupTable, StrategyProgram, asm_block
from .tensor import FIX16_MAX, FIX16_MIN, REAL32, DType, Tensor, parse_dtype
from .view import Boundary, ViewSpec, ViewTerm

RANGE_LUT_SIZE = 256


@dataclass(frozen=True)
class Template:
    name: str
    description: str
    defaults: Mapping[str, object]
    make: Callable  # (params, dtype) -> (viewA, viewB, program, shapeA, shapeB)
    reference: Callable  # (params, A, B) -> ndarray of storage values
    real_only: bool = False


TEMPLATES: Dict[str, Template] = {}


def _register(t: Template) -> Template:
    TEMPLATES[t.name] = t
    return t


def list_templates() -> List[str]:
    return sorted(TEMPLATES)


def _template(name: str) -> Template:
    try:
        return TEMPLATES[name]
    except KeyError:
        raise UnknownTemplate(f"unknown template {name!r}; known: {', '.join(list_templates())}") from None


# --- parameter handling ---------------------------------------------------------


def parse_params(text: str) -> Dict[str, object]:
    """Parse ``"k=3,stride=1,pad=same"`` into a dict (ints and floats coerced)."""
    out: Dict[str, object] = {}
    if not text:
        return out
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, val = item.partition("=")
        if not sep:
            raise BadParams(f"expected key=value, got {item!r}")
        out[key.strip()] = _coerce(val.strip())
    return out


def _coerce(val: str):
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val


def normalize_params(name: str, params: Optional[Mapping[str, object]]) -> Dict[str, object]:
    t = _template(name)
    params = dict(params or {})
    unknown = set(params) - set(t.defaults)
    if unknown:
        raise BadParams(f"{name} does not take {sorted(unknown)}; accepted: {sorted(t.defaults)}")
    merged = dict(t.defaults)
    merged.update(params)
    return merged


def _pos(p, *keys):
    for k in keys:
        v = p[k]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise BadParams(f"{k} must be a positive integer, got {v!r}")


def _nonneg(p, *keys):
    for k in keys:
        v = p[k]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise BadParams(f"{k} must be a non-negative integer, got {v!r}")


def _int(p, *keys):
    for k in keys:
        if not isinstance(p[k], int) or isinstance(p[k], bool):
            raise BadParams(f"{k} must be an integer, got {p[k]!r}")


# --- shared programs ---------------------------------------------------------------


def _shift(dtype: DType) -> int:
    return dtype.frac_bits if dtype.is_fixed else 0


def dot_program(depth: int, dtype: DType, relu: bool = False) -> StrategyProgram:
    """r0 = 0; r0 += a*b over the nest; emit r0 (optionally clamped at 0)."""
    s = _shift(dtype)
    pre = ["MOVC r0 #0"] + [""] * (depth - 1)
    post = ["MAX o0 r0 c0" if relu else "MAX o0 r0 r0"] + [""] * (depth - 1)
    body = f"MAC r0 r0 a b >>{s}" if s else "MAC r0 r0 a b"
    if depth == 0:
        return StrategyProgram(0, [asm_block(f"MOVC r0 #0; {body}; {post[0]}")], constants=(0,))
    return StrategyProgram.build(pre, body, post, constants=(0,))


# --- fixed-point helpers for the oracles -----------------------------------------


def _sat(v: int) -> int:
    return min(max(v, FIX16_MIN), FIX16_MAX)


def _mac(acc, x, y, dtype: DType):
    if dtype.is_fixed:
        return _sat(int(acc) + ((int(x) * int(y)) >> dtype.frac_bits))
    return acc + float(x) * float(y)


def _pad_read(arr: np.ndarray, idx: Sequence[int]):
    for i, e in zip(idx, arr.shape):
        if not 0 <= i < e:
            return 0
    return arr[tuple(idx)]


# --- gemm ----------------------------------------------------------------------------


def _gemm_make(p, dtype):
    _pos(p, "m", "n", "k")
    m, n, k = p["m"], p["n"], p["k"]
    va = ViewSpec((m, k), (m, n), (k,), [ViewTerm(0, 0), ViewTerm(2, 1)])
    vb = ViewSpec((k, n), (m, n), (k,), [ViewTerm(2, 0), ViewTerm(1, 1)])
    return va, vb, dot_program(1, dtype), (m, k), (k, n)


def _gemm_ref(p, A, B, dtype):
    m, n, k = p["m"], p["n"], p["k"]
    out = np.zeros((m, n), dtype=object)
    for i in range(m):
        for j in range(n):
            acc = 0
            for t in range(k):
                acc = _mac(acc, A[i, t], B[t, j], dtype)
            out[i, j] = acc
    return out


_register(Template("gemm", "matrix product (m,k)x(k,n)", {"m": 4, "n": 4, "k": 4}, _gemm_make, _gemm_ref))


# --- conv2d family -------------------------------------------------------------------


def _conv_geometry(p):
    _pos(p, "in_channels", "out_channels", "h", "w", "k", "stride", "dilation")
    pad = p["pad"]
    if pad == "same":
        pad = p["dilation"] * (p["k"] - 1) // 2
    if not isinstance(pad, int) or pad < 0:
        raise BadParams(f"pad must be 'same' or a non-negative integer, got {p['pad']!r}")
    span = p["dilation"] * (p["k"] - 1) + 1
    ho = (p["h"] + 2 * pad - span) // p["stride"] + 1
    wo = (p["w"] + 2 * pad - span) // p["stride"] + 1
    if ho < 1 or wo < 1:
        raise BadParams("kernel does not fit the padded image")
    return pad, ho, wo


def _conv_views(ci, co, h, w, k, stride, dil, off, ho, wo):
    """Input/kernel views; the channel axes are dropped when both counts are 1."""
    if ci == 1 and co == 1:
        va = ViewSpec(
            (h, w), (ho, wo), (k, k),
            [ViewTerm(0, 0, stride, off), ViewTerm(2, 0, dil), ViewTerm(1, 1, stride, off), ViewTerm(3, 1, dil)],
        )
        vb = ViewSpec((k, k), (ho, wo), (k, k), [ViewTerm(2, 0), ViewTerm(3, 1)])
        return va, vb, (h, w), (k, k)
    va = ViewSpec(
        (ci, h, w), (co, ho, wo), (ci, k, k),
        [ViewTerm(3, 0), ViewTerm(1, 1, stride, off), ViewTerm(4, 1, dil), ViewTerm(2, 2, stride, off), ViewTerm(5, 2, dil)],
    )
    vb = ViewSpec(
        (co, ci, k, k), (co, ho, wo), (ci, k, k),
        [ViewTerm(0, 0), ViewTerm(3, 1), ViewTerm(4, 2), ViewTerm(5, 3)],
    )
    return va, vb, (ci, h, w), (co, ci, k, k)


def _conv_make(p, dtype, relu=False):
    pad, ho, wo = _conv_geometry(p)
    va, vb, sa, sb = _conv_views(p["in_channels"], p["out_channels"], p["h"], p["w"], p["k"],
                                 p["stride"], p["dilation"], -pad, ho, wo)
    return va, vb, dot_program(len(va.a_shape), dtype, relu=relu), sa, sb


def _conv_loops(I, K, co, ho, wo, ci, k, stride, dil, off, dtype, relu=False):
    out = np.zeros((co, ho, wo), dtype=object)
    for o in range(co):
        for y in range(ho):
            for x in range(wo):
                acc = 0
                for c in range(ci):
                    for ky in range(k):
                        for kx in range(k):
                            v = _pad_read(I[c], (y * stride + ky * dil + off, x * stride + kx * dil + off))
                            acc = _mac(acc, v, K[o, c, ky, kx], dtype)
                out[o, y, x] = max(acc, 0) if relu else acc
    return out


def _conv_ref(p, A, B, dtype, relu=False):
    pad, ho, wo = _conv_geometry(p)
    ci, co, k = p["in_channels"], p["out_channels"], p["k"]
    I = A.reshape(ci, p["h"], p["w"])
    K = B.reshape(co, ci, k, k)
    out = _conv_loops(I, K, co, ho, wo, ci, k, p["stride"], p["dilation"], -pad, dtype, relu)
    return out.reshape((ho, wo)) if ci == 1 and co == 1 else out


_CONV_DEFAULTS = {"in_channels": 1, "out_channels": 1, "h": 32, "w": 32, "k": 3, "stride": 1, "dilation": 1, "pad": "same"}

_register(Template("conv2d", "2-D convolution (cross-correlation) with zero padding", _CONV_DEFAULTS, _conv_make, _conv_ref))
_register(Template(
    "relu_fused_conv", "2-D convolution with the ReLU fused into the output phase", _CONV_DEFAULTS,
    lambda p, d: _conv_make(p, d, relu=True), lambda p, A, B, d: _conv_ref(p, A, B, d, relu=True),
))


def _alex_geometry(p):
    _pos(p, "out_channels", "in_channels", "out_size", "size", "k", "stride")
    _int(p, "offset")
    return p["out_channels"], p["in_channels"], p["out_size"], p["size"], p["k"], p["stride"], p["offset"]


def _alex_make(p, dtype):
    co, ci, n, size, k, stride, off = _alex_geometry(p)
    va = ViewSpec(
        (ci, size, size), (co, n, n), (ci, k, k),
        [ViewTerm(3, 0), ViewTerm(1, 1, stride, off), ViewTerm(4, 1), ViewTerm(2, 2, stride, off), ViewTerm(5, 2)],
    )
    vb = ViewSpec((co, ci, k, k), (co, n, n), (ci, k, k),
                  [ViewTerm(0, 0), ViewTerm(3, 1), ViewTerm(4, 2), ViewTerm(5, 3)])
    return va, vb, dot_program(3, dtype), (ci, size, size), (co, ci, k, k)


def _alex_ref(p, A, B, dtype):
    co, ci, n, size, k, stride, off = _alex_geometry(p)
    return _conv_loops(A, B, co, n, n, ci, k, stride, 1, off, dtype)


_register(Template(
    "alexnet_conv1", "first AlexNet layer slice: NDRange(48,55,55,3,11,11), stride 4, offset -5",
    {"out_channels": 48, "in_channels": 3, "out_size": 55, "size": 224, "k": 11, "stride": 4, "offset": -5},
    _alex_make, _alex_ref,
))


# --- correlation ---------------------------------------------------------------------


def _corr_make(p, dtype):
    _pos(p, "channels", "h", "w", "disp")
    _int(p, "disp_offset")
    c, h, w, d, o = p["channels"], p["h"], p["w"], p["disp"], p["disp_offset"]
    va = ViewSpec((c, h, w), (h, w, d, d), (c,), [ViewTerm(4, 0), ViewTerm(0, 1), ViewTerm(1, 2)])
    vb = ViewSpec(
        (c, h, w), (h, w, d, d), (c,),
        [ViewTerm(4, 0), ViewTerm(0, 1), ViewTerm(2, 1, 1, o), ViewTerm(1, 2), ViewTerm(3, 2, 1, o)],
    )
    return va, vb, dot_program(1, dtype), (c, h, w), (c, h, w)


def _corr_ref(p, A, B, dtype):
    c, h, w, d, o = p["channels"], p["h"], p["w"], p["disp"], p["disp_offset"]
    out = np.zeros((h, w, d, d), dtype=object)
    for y in range(h):
        for x in range(w):
            for dy in range(d):
                for dx in range(d):
                    acc = 0
                    for ch in range(c):
                        acc = _mac(acc, A[ch, y, x], _pad_read(B[ch], (y + dy + o, x + dx + o)), dtype)
                    out[y, x, dy, dx] = acc
    return out


_register(Template(
    "correlation", "optical-flow correlation layer between two feature maps",
    {"channels": 4, "h": 8, "w": 8, "disp": 3, "disp_offset": 0}, _corr_make, _corr_ref,
))


# --- motion estimation ---------------------------------------------------------------


def _me_geometry(p):
    _pos(p, "h", "w", "block")
    _nonneg(p, "radius")
    b = p["block"]
    if p["h"] % b or p["w"] % b:
        raise BadParams(f"frame {p['h']}x{p['w']} is not a multiple of block {b}")
    return p["h"] // b, p["w"] // b, b, p["radius"]


def _me_make(p, dtype):
    gy, gx, b, r = _me_geometry(p)
    d = 2 * r + 1
    h, w = p["h"], p["w"]
    va = ViewSpec((h, w), (gy, gx, d, d), (b, b),
                  [ViewTerm(0, 0, b), ViewTerm(4, 0), ViewTerm(1, 1, b), ViewTerm(5, 1)])
    vb = ViewSpec(
        (h, w), (gy, gx, d, d), (b, b),
        [ViewTerm(0, 0, b), ViewTerm(2, 0, 1, -r), ViewTerm(4, 0),
         ViewTerm(1, 1, b), ViewTerm(3, 1, 1, -r), ViewTerm(5, 1)],
    )
    prog = StrategyProgram.build(["MOVC r0 #0", ""], "L1 r0 r0 a b", ["MAX o0 r0 r0", ""], constants=(0,))
    return va, vb, prog, (h, w), (h, w)


def _me_ref(p, A, B, dtype):
    gy, gx, b, r = _me_geometry(p)
    d = 2 * r + 1
    out = np.zeros((gy, gx, d, d), dtype=object)
    for by in range(gy):
        for bx in range(gx):
            for dy in range(d):
                for dx in range(d):
                    acc = 0
                    for i in range(b):
                        for j in range(b):
                            cur = A[by * b + i, bx * b + j]
                            ref = _pad_read(B, (by * b + dy - r + i, bx * b + dx - r + j))
                            if dtype.is_fixed:
                                acc = _sat(int(acc) + abs(int(cur) - int(ref)))
                            else:
                                acc = acc + abs(float(cur) - float(ref))
                    out[by, bx, dy, dx] = acc
    return out


_register(Template(
    "motion_estimation", "block-matching sum of absolute differences over a search window",
    {"h": 16, "w": 16, "block": 4, "radius": 2}, _me_make, _me_ref,
))


# --- bilateral -------------------------------------------------------------------------


def range_table(sigma_r: float) -> LookupTable:
    xs = np.linspace(-1.0, 1.0, RANGE_LUT_SIZE)
    return LookupTable(tuple(float(v) for v in np.exp(-(xs**2) / (2.0 * sigma_r**2))), -1.0, 1.0)


def spatial_table(k: int, sigma_s: float) -> LookupTable:
    c = k // 2
    samples = [math.exp(-((i - c) ** 2) / (2.0 * sigma_s**2)) for i in range(k)]
    if k == 1:
        return LookupTable((samples[0], samples[0]), 0.0, 1.0)
    return LookupTable(tuple(samples), 0.0, float(k - 1))


def _bil_check(p):
    _pos(p, "h", "w", "k")
    if p["k"] % 2 == 0:
        raise BadParams("bilateral window k must be odd")
    for key in ("sigma_s", "sigma_r"):
        if not isinstance(p[key], (int, float)) or p[key] <= 0:
            raise BadParams(f"{key} must be positive")


def _bil_make(p, dtype):
    _bil_check(p)
    h, w, k = p["h"], p["w"], p["k"]
    r = k // 2
    va = ViewSpec((h, w), (h, w), (k, k),
                  [ViewTerm(0, 0), ViewTerm(2, 0, 1, -r), ViewTerm(1, 1), ViewTerm(3, 1, 1, -r)], Boundary.CLAMP)
    # centre pixel: the a-components carry no terms, so the value repeats along a
    vb = ViewSpec((h, w), (h, w), (k, k), [ViewTerm(0, 0), ViewTerm(1, 1)], Boundary.CLAMP)
    body = """
        SUB r2 c0 a b
        LUT r3 r2 #0
        IDX r4 #2
        LUT r4 r4 #1
        IDX r5 #3
        LUT r5 r5 #1
        MAC r6 c0 r4 r5
        MAC r7 c0 r3 r6
        ADD r0 r0 r7 c0
        MAC r1 r1 r7 a
    """
    prog = StrategyProgram.build(
        ["MOVC r0 #0; MOVC r1 #0", ""], body, ["DIV o0 r1 r0", ""],
        constants=(0.0,), tables=(range_table(p["sigma_r"]), spatial_table(k, p["sigma_s"])),
    )
    return va, vb, prog, (h, w), (h, w)


def _interp(table: LookupTable, x: float) -> float:
    xs = np.linspace(table.lo, table.hi, len(table.samples))
    if x < table.lo or x > table.hi:
        raise ValueError("oracle lookup outside table range")
    return float(np.interp(x, xs, table.samples))


def _bil_ref(p, A, B, dtype):
    _bil_check(p)
    h, w, k = p["h"], p["w"], p["k"]
    r = k // 2
    rt, st = range_table(p["sigma_r"]), spatial_table(k, p["sigma_s"])
    out = np.zeros((h, w), dtype=object)
    for y in range(h):
        for x in range(w):
            centre = float(B[y, x])
            wsum = wxsum = 0.0
            for i in range(k):
                for j in range(k):
                    v = float(A[min(max(y + i - r, 0), h - 1), min(max(x + j - r, 0), w - 1)])
                    wt = _interp(rt, v - centre) * (_interp(st, i) * _interp(st, j))
                    wsum += wt
                    wxsum += wt * v
            out[y, x] = wxsum / wsum
    return out


_register(Template(
    "bilateral", "edge-preserving bilateral filter with lookup-table weights (REAL32, inputs in [0,1])",
    {"h": 16, "w": 16, "k": 5, "sigma_s": 2.0, "sigma_r": 0.2}, _bil_make, _bil_ref, real_only=True,
))


# --- max pooling -----------------------------------------------------------------------


def _pool_geometry(p):
    _pos(p, "h", "w", "k", "stride")
    ho, wo = (p["h"] - p["k"]) // p["stride"] + 1, (p["w"] - p["k"]) // p["stride"] + 1
    if p["k"] > p["h"] or p["k"] > p["w"]:
        raise BadParams("pool window larger than the image")
    return ho, wo


def _pool_make(p, dtype):
    ho, wo = _pool_geometry(p)
    s, k = p["stride"], p["k"]
    va = ViewSpec((p["h"], p["w"]), (ho, wo), (k, k),
                  [ViewTerm(0, 0, s), ViewTerm(2, 0), ViewTerm(1, 1, s), ViewTerm(3, 1)])
    vb = ViewSpec((1,), (ho, wo), (k, k), [])
    prog = StrategyProgram.build(["MAX r0 a a", ""], "MAX r0 r0 a", ["MAX o0 r0 r0", ""])
    return va, vb, prog, (p["h"], p["w"]), (1,)


def _pool_ref(p, A, B, dtype):
    ho, wo = _pool_geometry(p)
    s, k = p["stride"], p["k"]
    out = np.zeros((ho, wo), dtype=object)
    for y in range(ho):
        for x in range(wo):
            out[y, x] = max(A[y * s + i, x * s + j] for i in range(k) for j in range(k))
    return out


_register(Template("maxpool", "max pooling (the second input is an unused dummy)",
                   {"h": 8, "w": 8, "k": 2, "stride": 2}, _pool_make, _pool_ref))


# --- public API --------------------------------------------------------------------------


def _resolve_dtype(t: Template, dtype) -> DType:
    if dtype is None:
        dtype = REAL32
    elif isinstance(dtype, str):
        dtype = parse_dtype(dtype)
    if t.real_only and dtype.is_fixed:
        raise BadParams(f"{t.name} runs in REAL32 only")
    return dtype


def random_inputs(name: str, params: Optional[Mapping[str, object]] = None, seed: int = 0,
                  dtype=None) -> Tuple[Tensor, Tensor]:
    """Seeded random inputs; reals in [-1, 1) (or [0, 1) for bilateral)."""
    t = _template(name)
    p = normalize_params(name, params)
    dtype = _resolve_dtype(t, dtype)
    _, _, _, sa, sb = t.make(p, dtype)
    rng = np.random.default_rng(seed)
    lo = 0.0 if name == "bilateral" else -1.0
    return tuple(Tensor.from_real(rng.uniform(lo, 1.0, size=s), dtype) for s in (sa, sb))


def build(name: str, params: Optional[Mapping[str, object]] = None, inputs: Optional[Sequence[Tensor]] = None,
          seed: int = 0, dtype=None) -> Workload:
    t = _template(name)
    p = normalize_params(name, params)
    if inputs is not None and dtype is None:
        dtype = inputs[0].dtype
    dtype = _resolve_dtype(t, dtype)
    va, vb, prog, sa, sb = t.make(p, dtype)
    if inputs is None:
        inputs = random_inputs(name, p, seed, dtype)
    A, B = inputs
    for label, src, shape in (("A", A, sa), ("B", B, sb)):
        if tuple(src.shape) != tuple(shape):
            raise BadParams(f"input {label} has shape {src.shape}, {name} expects {tuple(shape)}")
        if src.dtype != dtype:
            raise BadParams(f"input {label} has dtype {src.dtype}, expected {dtype}")
    return Workload(va, vb, A, B, prog)


def oracle(name: str, params: Optional[Mapping[str, object]], inputs: Sequence[Tensor]) -> Tensor:
    t = _template(name)
    p = normalize_params(name, params)
    A, B = inputs
    dtype = _resolve_dtype(t, A.dtype)
    ref = t.reference(p, A.array(), B.array(), dtype)
    if dtype.is_fixed:
        data = np.asarray(ref, dtype=np.int64)
    else:
        data = np.asarray(ref, dtype=np.float64)
    return Tensor(data.shape, dtype, data)


def sample_params(name: str, rng: np.random.Generator, max_extent: int = 12) -> Dict[str, object]:
    """Random valid parameters for a template, every extent at most ``max_extent``."""
    r = lambda lo, hi: int(rng.integers(lo, hi + 1))  # noqa: E731
    m = max_extent
    if name == "gemm":
        return {"m": r(1, m), "n": r(1, m), "k": r(1, m)}
    if name in ("conv2d", "relu_fused_conv"):
        k = r(1, min(5, m))
        dil = r(1, 2) if 2 * k <= m else 1
        h, w = r(max(k * dil, min(2, m)), m), r(max(k * dil, min(2, m)), m)
        ci, co = (1, 1) if rng.random() < 0.5 else (r(1, 3), r(1, 3))
        return {"in_channels": ci, "out_channels": co, "h": h, "w": w, "k": k,
                "stride": r(1, 2), "dilation": dil, "pad": "same" if rng.random() < 0.7 else r(0, 2)}
    if name == "alexnet_conv1":
        n = r(1, 4)
        return {"out_channels": r(1, 3), "in_channels": r(1, 3), "out_size": n, "size": 4 * (n - 1) + r(6, 11),
                "k": 11, "stride": 4, "offset": -5}
    if name == "correlation":
        return {"channels": r(1, 4), "h": r(1, m), "w": r(1, m), "disp": r(1, 4), "disp_offset": r(-2, 0)}
    if name == "motion_estimation":
        b = r(1, 4)
        return {"h": b * r(1, max(1, m // b)), "w": b * r(1, max(1, m // b)), "block": b, "radius": r(0, 2)}
    if name == "bilateral":
        return {"h": r(1, m), "w": r(1, m), "k": 2 * r(0, 2) + 1,
                "sigma_s": float(rng.uniform(0.5, 3.0)), "sigma_r": float(rng.uniform(0.1, 1.0))}
    if name == "maxpool":
        k = r(1, min(3, m))
        return {"h": r(k, m), "w": r(k, m), "k": k, "stride": r(1, 3)}
    raise UnknownTemplate(f"unknown template {name!r}")
