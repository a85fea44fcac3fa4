"""Command-line interface.

Exit codes: 0 success, 1 failed run/check, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .engine import DEFAULT_SEARCH_BUDGET, run_script
from .errors import ScriptError, TensecellError, UsageError
from .objexport import export_obj
from .placement import BilinearConstraint, build_fusion_constraint, sample_surface
from .structure import (DEFAULT_RANK_TOL, audit, count_report,
                        typology_from_stress)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tensecell",
        description="Generate tensegrity structures by cell adhesion and fusion.")
    ap.add_argument("--tol", type=float, default=DEFAULT_RANK_TOL,
                    help="relative rank tolerance (default 1e-9)")
    ap.add_argument("--budget", type=int, default=DEFAULT_SEARCH_BUDGET,
                    help="virtual-cell search budget (default 20000)")
    ap.add_argument("--seed", type=int, default=0,
                    help="RNG seed for surface sampling")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a morphogenesis script")
    p.add_argument("script", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None,
                   help="write the resulting structure file here")

    p = sub.add_parser("check", help="audit a structure file's invariants")
    p.add_argument("structure", type=Path)

    p = sub.add_parser("stress", help="print the self-stress basis and typology")
    p.add_argument("structure", type=Path)

    p = sub.add_parser("surface", help="constraint surface for a two-member fusion")
    p.add_argument("structure", type=Path)
    p.add_argument("--fuse", required=True,
                   help="two members, e.g. B:D,C:E")
    p.add_argument("--fix", default=None,
                   help="existing node adopted as the fourth cell node")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("export", help="export a structure")
    p.add_argument("structure", type=Path)
    p.add_argument("--obj", type=Path, default=None, help="write an OBJ file")
    p.add_argument("--structure-out", type=Path, default=None,
                   help="rewrite the canonical structure file")

    p = sub.add_parser("report", help="delimited member table plus rendered figures")
    p.add_argument("structure", type=Path)
    p.add_argument("-o", "--outdir", type=Path, required=True)

    p = sub.add_parser("serve", help="start the local session service")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("TENSECELL_PORT", "8741")))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", type=Path, default=None,
                   help="directory of built workbench assets to serve")
    return ap


def _member_list(tok: str):
    out = []
    for part in tok.split(","):
        a, _, b = part.partition(":")
        if not a or not b:
            raise UsageError(f"bad member {part!r}; use i:j,i:j")
        out.append((a, b))
    return out


def cmd_run(args) -> int:
    steps = fileio.load_script(args.script)
    result = run_script(steps, tol=args.tol, budget=args.budget)
    problems = audit(result.state, result.morpho, tol=args.tol)
    rep = count_report(result.state, tol=args.tol)
    for log in result.logs:
        print(f"  {log.kind:7s} {log.detail}  "
              f"(dE={log.delta_edges:+d} dV={log.delta_nodes:+d} "
              f"dW={log.observed_delta:+d})")
    print(f"done: {rep.n_nodes} nodes, {rep.n_members} members, "
          f"dim W = {rep.dim_w}, mechanisms = {rep.mechanisms}")
    if problems:
        for pr in problems:
            print(f"invariant violation: {pr}", file=sys.stderr)
        return EXIT_FAIL
    if args.output:
        fileio.save_structure(args.output, result.state, result.morpho)
        print(f"wrote {args.output}")
    return EXIT_OK


def cmd_check(args) -> int:
    state, morpho = fileio.load_structure(args.structure)
    problems = audit(state, morpho, tol=args.tol)
    rep = count_report(state, tol=args.tol)
    print(f"{rep.n_nodes} nodes, {rep.n_members} members, dim W = {rep.dim_w}, "
          f"rank A = {rep.rank_a}, mechanisms = {rep.mechanisms}, "
          f"laman bound = {rep.laman_bound}")
    if rep.dof_small is not None:
        print(f"note: small structure; pair-count dof = {rep.dof_small}")
    if problems:
        for pr in problems:
            print(f"FAIL {pr}", file=sys.stderr)
        return EXIT_FAIL
    print("all invariants hold")
    return EXIT_OK


def cmd_stress(args) -> int:
    state, _ = fileio.load_structure(args.structure)
    if state.dim_w == 0:
        print("no self-stress states")
        return EXIT_OK
    header = "member".ljust(12) + "".join(
        (cid or f"w{k+1}").rjust(12) for k, cid in enumerate(state.column_cells))
    print(header)
    for k, m in enumerate(state.members):
        row = f"{m[0]}-{m[1]}".ljust(12)
        row += "".join(f"{state.basis[k, c]:12.6f}" for c in range(state.dim_w))
        print(row)
    try:
        labels = typology_from_stress(state)
        n_strut = sum(1 for v in labels.values() if v == "strut")
        n_cable = sum(1 for v in labels.values() if v == "cable")
        print(f"typology (all-ones combination): {n_strut} struts, {n_cable} cables")
    except TensecellError as exc:
        print(f"typology: {exc}")
    return EXIT_OK


def cmd_surface(args) -> int:
    state, _ = fileio.load_structure(args.structure)
    members = _member_list(args.fuse)
    if len(members) != 2:
        raise UsageError("--fuse needs exactly two members")
    constraint = build_fusion_constraint(state, members, fix=args.fix)
    coords = state.coords()
    pts = np.array(list(coords.values()))
    margin = 0.75 * (pts.max(0) - pts.min(0)).max() + 1.0
    region = (pts.min(0) - margin, pts.max(0) + margin)
    if isinstance(constraint, BilinearConstraint):
        payload = {
            "kind": "bilinear",
            "matrix": constraint.matrix.tolist(),
            "note": "fix one node (--fix) to obtain a samplable plane",
            "samples": [],
        }
    else:
        samples = sample_surface(constraint, args.samples, region, seed=args.seed)
        payload = {
            "kind": type(constraint).__name__.replace("Constraint", "").lower(),
            "matrix": getattr(constraint, "matrix", None).tolist()
            if hasattr(constraint, "matrix")
            else list(constraint.form.coefficients),
            "samples": [list(map(float, s)) for s in samples],
        }
    if args.json:
        print(json.dumps(payload))
    else:
        print(f"constraint: {payload['kind']}")
        print(f"coefficients: {payload['matrix']}")
        print(f"{len(payload['samples'])} sample points")
        for s in payload["samples"][:10]:
            print(f"  {s}")
    return EXIT_OK


def cmd_export(args) -> int:
    state, morpho = fileio.load_structure(args.structure)
    wrote = False
    if args.obj:
        export_obj(state, args.obj)
        print(f"wrote {args.obj}")
        wrote = True
    if args.structure_out:
        fileio.save_structure(args.structure_out, state, morpho)
        print(f"wrote {args.structure_out}")
        wrote = True
    if not wrote:
        raise UsageError("nothing to export: pass --obj and/or --structure-out")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import write_report
    state, morpho = fileio.load_structure(args.structure)
    out = write_report(state, args.outdir, morpho)
    print(f"wrote {out}/members.csv, structure.png"
          + (", basis.png" if state.dim_w else "") + ", counts.txt")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve
    serve(host=args.host, port=args.port, static_dir=args.static,
          tol=args.tol, budget=args.budget)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "run": cmd_run, "check": cmd_check, "stress": cmd_stress,
        "surface": cmd_surface, "export": cmd_export, "report": cmd_report,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScriptError as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except TensecellError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
