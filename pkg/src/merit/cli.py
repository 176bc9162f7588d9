"""``merit`` command-line front end. Every subcommand prints one JSON document.

Exit status: 0 on success, 1 when an analysis verdict fails (irreducible
pattern, unroutable permutation, verification mismatch), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import engine, interconnect, layout, perfmodel, workloads
from .errors import MeritError
from .rip import StrategyProgram
from .tensor import parse_dtype, read_tensor, to_bytes, write_tensor
from .view import ViewSpec, footprint

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- parsing helpers ------------------------------------------------------------------


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def parse_tile(text: str) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """``"16x8,5x5"`` -> ``((16, 8), (5, 5))``; an empty side means rank 0."""
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"tile must look like '16x8,5x5', got {text!r}")

    def side(s):
        s = s.strip()
        if not s:
            return ()
        try:
            return tuple(int(v) for v in s.split("x"))
        except ValueError:
            raise UsageError(f"bad tile extent list {s!r}") from None

    return side(parts[0]), side(parts[1])


def emit(doc, args) -> None:
    if getattr(args, "json", False):
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    else:
        text = json.dumps(doc, sort_keys=True, indent=2)
    sys.stdout.write(text + "\n")


def _tensor_digest(t) -> str:
    return hashlib.sha256(to_bytes(t)).hexdigest()


# --- workload loading -------------------------------------------------------------------


def load_manifest(path: str):
    """Workload, tiling and settings from a manifest JSON file.

    Either ``{"template", "params", "seed", "dtype"}`` or explicit files
    ``{"viewA", "viewB", "program", "srcA", "srcB"}`` (paths relative to the
    manifest). Optional keys: ``tiling {t_p, t_a}``, ``machine``, ``output``.
    """
    base = Path(path).parent
    with open(path) as fh:
        m = json.load(fh)
    if "template" in m:
        w = workloads.build(m["template"], m.get("params", {}), seed=int(m.get("seed", 0)), dtype=m.get("dtype"))
    else:
        try:
            va = ViewSpec.from_json((base / m["viewA"]).read_text())
            vb = ViewSpec.from_json((base / m["viewB"]).read_text())
            prog = StrategyProgram.from_json((base / m["program"]).read_text())
            ta, tb = read_tensor(base / m["srcA"]), read_tensor(base / m["srcB"])
        except KeyError as e:
            raise UsageError(f"manifest lacks {e}") from None
        w = engine.Workload(va, vb, ta, tb, prog)
    if m.get("output"):
        m["output"] = str(base / m["output"])
    return w, m


def _workload_from_args(args):
    if getattr(args, "manifest", None):
        return load_manifest(args.manifest)
    if not args.template:
        raise UsageError("give --template or --manifest")
    params = workloads.parse_params(args.params or "")
    w = workloads.build(args.template, params, seed=args.seed, dtype=args.dtype)
    return w, {"template": args.template, "params": workloads.normalize_params(args.template, params)}


def _plan(text: Optional[str], w) -> Optional[engine.TilingPlan]:
    if not text:
        return None
    t_p, t_a = parse_tile(text)
    return engine.TilingPlan(t_p, t_a)


# --- subcommands ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    w, meta = _workload_from_args(args)
    plan = _plan(args.tile, w)
    if plan is None and meta.get("tiling"):
        plan = engine.TilingPlan(meta["tiling"]["t_p"], meta["tiling"]["t_a"])
    doc = {"output_shape": list(w.output_shape), "dtype": str(w.dtype), "macs": w.macs}
    if "template" in meta:
        doc["template"] = meta["template"]
        doc["params"] = meta.get("params", {})
    if plan is not None:
        out, rep = engine.run_tiled(w, plan, capacity_bytes=None if args.unlimited else engine.DEFAULT_SCRATCHPAD_BYTES)
        doc["traffic"] = rep.to_dict()
        doc["naive_unrolled_words"] = engine.traffic_naive_unrolled(w)
    else:
        out = engine.run_full(w)
    doc["sha256"] = _tensor_digest(out)
    status = EXIT_OK
    if args.verify:
        if "template" not in meta:
            raise UsageError("--verify needs a template workload")
        ref = workloads.oracle(meta["template"], meta.get("params"), (w.srcA, w.srcB))
        if w.dtype.is_fixed:
            ok = out.same_bits(ref)
            err = float(np.max(np.abs(out.data.astype(np.int64) - ref.data.astype(np.int64)))) if out.size else 0.0
        else:
            a, b = out.data.astype(np.float64), ref.data.astype(np.float64)
            err = float(np.max(np.abs(a - b))) if a.size else 0.0
            ok = bool(np.all(np.abs(a - b) <= 1e-5 * (1 + np.abs(b))))
        doc["verify"] = {"match": ok, "max_abs_err": err}
        status = EXIT_OK if ok else EXIT_FAIL
    dest = args.out or meta.get("output")
    if dest:
        write_tensor(out, dest)
        doc["written"] = os.path.basename(str(dest))
    emit(doc, args)
    return status


def cmd_footprint(args) -> int:
    if args.view_json:
        spec = ViewSpec.from_json(Path(args.view_json).read_text())
    else:
        w, _ = _workload_from_args(args)
        spec = w.viewA if args.input == "A" else w.viewB
    t_p, t_a = parse_tile(args.tile)
    fp = footprint(spec, t_p, t_a)
    rows = int(np.prod(t_p, dtype=np.int64)) * int(np.prod(t_a, dtype=np.int64))
    emit({"per_axis": list(fp.per_axis), "words": fp.words, "unrolled_words": rows}, args)
    return EXIT_OK


def cmd_banks(args) -> int:
    coeffs = parse_ints(args.coeffs)
    if args.banks < 1 or args.banks & (args.banks - 1):
        raise UsageError("--banks must be a power of two")
    bank_bits = args.banks.bit_length() - 1
    if len(coeffs) != bank_bits:
        raise UsageError(f"{args.banks} banks need {bank_bits} coefficients, got {len(coeffs)}")
    doc = {"coeffs": coeffs, "banks": args.banks}
    if args.search_hash:
        m = args.m if args.m is not None else max(bank_bits, layout.default_address_bits(coeffs))
        h = layout.property_matrix(coeffs, m)
        doc["H"] = h.to_lists()
        found = layout.search_hash(h, bank_bits)
        if found is None:
            doc.update({"reducible": False, "hash": None})
            emit(doc, args)
            return EXIT_FAIL
        cfg, hp, red = found
        doc.update({
            "reducible": True,
            "hash": cfg.to_dict(),
            "H_hashed": hp.to_lists(),
            "trace": list(red.trace),
            "conflicts": layout.detect_conflicts(coeffs, args.banks, cfg).to_dict(),
        })
        emit(doc, args)
        return EXIT_OK
    m = args.m if args.m is not None else bank_bits
    h = layout.property_matrix(coeffs, m)
    red = layout.reduce_to_identity(h)
    doc.update({
        "H": h.to_lists(),
        "reducible": red.success,
        "trace": list(red.trace),
        "conflicts": layout.detect_conflicts(coeffs, args.banks).to_dict(),
    })
    if red.reason:
        doc["reason"] = red.reason
    emit(doc, args)
    return EXIT_OK if red.success else EXIT_FAIL


def cmd_route(args) -> int:
    perm = parse_ints(args.perm)
    try:
        cfg = interconnect.butterfly_route(args.banks, perm)
    except ValueError as e:
        raise UsageError(str(e)) from None
    doc = {"banks": args.banks, "perm": perm, "routable": cfg is not None,
           "xor_permutation": interconnect.is_xor_permutation(perm)}
    if cfg is not None:
        doc["stages"] = [list(s) for s in cfg.stages]
    emit(doc, args)
    return EXIT_OK if cfg is not None else EXIT_FAIL


def _machine(args) -> perfmodel.MachineParams:
    bw = float("inf") if args.bandwidth is None else args.bandwidth
    return perfmodel.MachineParams(alus_per_tau=args.alus, taus=args.taus, dram_words_per_cycle=bw,
                                   pipeline_depth=args.depth)


def cmd_pipeline(args) -> int:
    w, _ = _workload_from_args(args)
    plan = _plan(args.tile, w) or engine.TilingPlan.full(w)
    mp = _machine(args)
    if args.fold > 1:
        plan = perfmodel.fold_plan(plan, w, args.fold)
        w = perfmodel.fold(w, args.fold)
    rep = perfmodel.simulate_pipeline(w, plan, mp)
    one = perfmodel.pass_latency(plan, w, mp)
    doc = rep.to_dict()
    doc.update({"pass_load_cycles": one.load, "pass_compute_cycles": one.compute, "fold": args.fold,
                "tile": [list(plan.t_p), list(plan.t_a)]})
    emit(doc, args)
    return EXIT_OK


def cmd_reuse(args) -> int:
    if args.macs is not None:
        if args.in_words is None or args.out_words is None:
            raise UsageError("--macs needs --in-words and --out-words")
        emit({"reuse_rate": engine.reuse_rate(args.macs, args.in_words, args.out_words)}, args)
        return EXIT_OK
    rows = [r.to_dict() for r in perfmodel.reuse_table()]
    emit({"rows": rows}, args)
    return EXIT_OK


def cmd_layouts(args) -> int:
    w, _ = _workload_from_args(args)
    spec = w.viewA
    t_p, t_a = parse_tile(args.tile)
    cands = layout.generate_layouts(spec, t_p, t_a, args.banks, max_pad=args.max_pad)
    emit({"candidates": [c.to_dict() for c in cands]}, args)
    return EXIT_OK


def cmd_list_templates(args) -> int:
    emit({"templates": [{"name": n, "description": workloads.TEMPLATES[n].description,
                         "defaults": dict(workloads.TEMPLATES[n].defaults)} for n in workloads.list_templates()]}, args)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------


def _workload_args(p, tile_required=False):
    p.add_argument("--template", help="workload template name (see list-templates)")
    p.add_argument("--params", default="", help="comma-separated key=value template parameters")
    p.add_argument("--manifest", help="workload manifest JSON")
    p.add_argument("--seed", type=int, default=0, help="seed for generated inputs (default 0)")
    p.add_argument("--dtype", default=None, help="real32, fix16 or fix16:<frac_bits>")
    p.add_argument("--tile", required=tile_required, help="tile as 'P0xP1,...,A0xA1' e.g. 16x8,5x5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="merit", description="Gather-view tensor engine and bank analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="compact single-line JSON")

    p = sub.add_parser("run", parents=[common], help="execute a workload")
    _workload_args(p)
    p.add_argument("--verify", action="store_true", help="compare against the direct-loop oracle")
    p.add_argument("--out", help="write the output tensor (MRT1)")
    p.add_argument("--unlimited", action="store_true", help="ignore the scratchpad capacity in tiled runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("footprint", parents=[common], help="footprint box of a tile")
    _workload_args(p, tile_required=True)
    p.add_argument("--input", choices=("A", "B"), default="A", help="which input view (default A)")
    p.add_argument("--view-json", help="view JSON file instead of a template")
    p.set_defaults(func=cmd_footprint)

    p = sub.add_parser("banks", parents=[common], help="bank-conflict analysis of A_n = A_0 + sum c_i b_i")
    p.add_argument("--coeffs", required=True, help="comma-separated coefficients, one per ALU bit")
    p.add_argument("--banks", type=int, required=True)
    p.add_argument("--m", type=int, default=None, help="address bits of the property matrix")
    p.add_argument("--search-hash", action="store_true", help="search an (X, R) bit hash")
    p.set_defaults(func=cmd_banks)

    p = sub.add_parser("route", parents=[common], help="route a bank-to-ALU permutation")
    p.add_argument("--banks", type=int, required=True)
    p.add_argument("--perm", required=True, help="bank read by ALU n, comma-separated")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("pipeline", parents=[common], help="analytic pass latency and utilization")
    _workload_args(p)
    p.add_argument("--alus", type=int, default=32, help="ALUs per TAU")
    p.add_argument("--taus", type=int, default=1)
    p.add_argument("--bandwidth", type=float, default=None, help="DRAM words per cycle (default unlimited)")
    p.add_argument("--depth", type=int, default=0, help="fixed load latency in cycles")
    p.add_argument("--fold", type=int, default=1, help="fold factor")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("reuse", parents=[common], help="reuse rate = MACs / (input + output words)")
    p.add_argument("--macs", type=float)
    p.add_argument("--in-words", type=float)
    p.add_argument("--out-words", type=float)
    p.set_defaults(func=cmd_reuse)

    p = sub.add_parser("layouts", parents=[common], help="padded, XOR and re-tiled scratchpad layouts")
    _workload_args(p, tile_required=True)
    p.add_argument("--banks", type=int, default=8)
    p.add_argument("--max-pad", type=int, default=None)
    p.set_defaults(func=cmd_layouts)

    p = sub.add_parser("list-templates", parents=[common], help="list workload templates")
    p.set_defaults(func=cmd_list_templates)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dtype", None):
        try:
            parse_dtype(args.dtype)
        except MeritError as e:
            parser.error(str(e))
    try:
        return args.func(args)
    except (UsageError, MeritError, ValueError, OSError) as e:
        code = getattr(e, "code", "USAGE")
        sys.stderr.write(f"merit: {code if isinstance(code, str) else 'USAGE'}: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
