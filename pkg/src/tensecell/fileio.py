"""Structure and script file formats.

Both formats are line-oriented, versioned text. Numbers are written with 17
significant digits so binary64 values survive a round trip. Writing always
uses canonical node/member order, which makes files diffable and stable.
"""

from __future__ import annotations

import io
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cell import Member, member_key, member_of, node_key
from .engine import (AdhereStep, ExpectStep, FuseStep, MorphoStep, OrientStep,
                     PlaceStep, SeedStep)
from .errors import ScriptError, UsageError
from .structure import (MorphoCell, MorphoGraph, StructureState, make_state)

STRUCTURE_MAGIC = "tensecell-structure"
SCRIPT_MAGIC = "tensecell-script"
FORMAT_VERSION = "v1"


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _member_token(m: Member) -> str:
    return f"{m[0]}:{m[1]}"


def _parse_member(tok: str, line_no: int) -> Member:
    parts = tok.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ScriptError(f"line {line_no}: bad member {tok!r}", line=line_no)
    return member_of(parts[0], parts[1])


def _parse_members(tok: str, line_no: int) -> Tuple[Member, ...]:
    return tuple(_parse_member(t, line_no) for t in tok.split(",") if t)


def _parse_floats(tokens: Sequence[str], line_no: int) -> List[float]:
    out = []
    for t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise ScriptError(f"line {line_no}: bad number {t!r}", line=line_no) from None
    return out


def _kv(tokens: Sequence[str], line_no: int, allowed: set) -> Dict[str, str]:
    out = {}
    for t in tokens:
        if "=" not in t:
            raise ScriptError(f"line {line_no}: expected key=value, got {t!r}", line=line_no)
        k, v = t.split("=", 1)
        if k not in allowed:
            raise ScriptError(f"line {line_no}: unknown key {k!r}", line=line_no)
        out[k] = v
    return out


# -- structure files -----------------------------------------------------------

def serialize_structure(state: StructureState, morpho: MorphoGraph | None = None) -> str:
    out = io.StringIO()
    rep_dim = state.dim_w
    print(f"{STRUCTURE_MAGIC} {FORMAT_VERSION}", file=out)
    print(f"# nodes={len(state.nodes)} members={len(state.members)} dim_w={rep_dim}",
          file=out)
    for n, p in state.nodes:
        print(f"node {n} {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}", file=out)
    labels = state.typology_map()
    for m in state.members:
        print(f"member {m[0]} {m[1]} {labels[m]}", file=out)
    for k in range(rep_dim):
        cid = state.column_cells[k] if k < len(state.column_cells) else f"w{k + 1}"
        vals = " ".join(fmt(v) for v in state.basis[:, k])
        print(f"stress {cid} {vals}", file=out)
    if morpho is not None:
        for c in morpho.cells:
            nodes = ",".join(sorted(c.node_set, key=node_key))
            edges = ",".join(_member_token(m) for m in sorted(c.edge_set, key=member_key))
            live = "live" if c.live else "retired"
            print(f"cell {c.cell_id} {c.kind} {live} nodes={nodes} edges={edges}", file=out)
        for (a, b), shared in sorted(morpho.adjacency().items()):
            toks = ",".join(_member_token(m) for m in shared)
            print(f"adjacency {a} {b} members={toks}", file=out)
    return out.getvalue()


def parse_structure(text: str):
    """Parse a structure file; returns (StructureState, MorphoGraph | None)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"{STRUCTURE_MAGIC} "):
        raise UsageError("not a structure file (missing header)")
    version = lines[0].split()[1]
    if version != FORMAT_VERSION:
        raise UsageError(f"unsupported structure version {version!r}")
    coords: Dict[str, tuple] = {}
    members: List[Member] = []
    typology: Dict[Member, str] = {}
    columns: List[Tuple[str, List[float]]] = []
    cells: List[MorphoCell] = []
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        if kind == "node":
            if len(rest) != 4:
                raise ScriptError(f"line {i}: node needs id and 3 coordinates", line=i)
            coords[rest[0]] = tuple(_parse_floats(rest[1:], i))
        elif kind == "member":
            if len(rest) not in (2, 3):
                raise ScriptError(f"line {i}: member needs two node ids", line=i)
            m = member_of(rest[0], rest[1])
            members.append(m)
            if len(rest) == 3:
                typology[m] = rest[2]
        elif kind == "stress":
            columns.append((rest[0], _parse_floats(rest[1:], i)))
        elif kind == "cell":
            if len(rest) < 5:
                raise ScriptError(f"line {i}: malformed cell record", line=i)
            cid, ckind, live = rest[0], rest[1], rest[2]
            kv = _kv(rest[3:], i, {"nodes", "edges"})
            node_set = frozenset(kv.get("nodes", "").split(","))
            edge_set = frozenset(_parse_members(kv.get("edges", ""), i))
            cells.append(MorphoCell(cell_id=cid, kind=ckind, node_set=node_set,
                                    edge_set=edge_set, live=(live == "live")))
        elif kind == "adjacency":
            continue  # derived data; recomputed from the cells
        else:
            raise ScriptError(f"line {i}: unknown record {kind!r}", line=i)
    basis = np.zeros((len(members), len(columns)))
    canon = tuple(sorted(set(members), key=member_key))
    for k, (_, vals) in enumerate(columns):
        if len(vals) != len(members):
            raise UsageError(
                f"stress column {k + 1} has {len(vals)} entries for "
                f"{len(members)} members")
        for m, v in zip(members, vals):
            basis[canon.index(m), k] = v
    state = make_state(coords, canon, basis,
                       column_cells=tuple(cid for cid, _ in columns),
                       typology=typology)
    morpho = MorphoGraph(tuple(cells)) if cells else None
    return state, morpho


# -- script files ---------------------------------------------------------------

_STEP_KEYS = {
    "seed": {"nodes", "anchor", "value"},
    "adhere": {"nodes", "shared", "anchor", "value"},
    "fuse": {"members"},
    "place": {"node", "remove", "guess", "fix"},
    "orient": {"member", "sign"},
    "expect": {"dim_w", "nodes", "members"},
}


def parse_script(text: str) -> List[MorphoStep]:
    """Parse a script file into engine steps.

    coord lines bind coordinates to the most recent seed/adhere step.
    Unknown keys and malformed records are rejected with line numbers.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"{SCRIPT_MAGIC} "):
        raise UsageError("not a script file (missing header); no seed step")
    version = lines[0].split()[1]
    if version != FORMAT_VERSION:
        raise UsageError(f"unsupported script version {version!r}")

    steps: List[MorphoStep] = []
    pending: Optional[dict] = None  # seed/adhere under construction

    def flush(line_no):
        nonlocal pending
        if pending is None:
            return
        kind = pending["kind"]
        nodes = pending["nodes"]
        have = set(pending["coords"])
        if kind == "seed":
            missing = [n for n in nodes if n not in have]
            if missing:
                raise ScriptError(
                    f"line {pending['line']}: seed is missing coordinates for "
                    f"{missing}", line=pending["line"])
            steps.append(SeedStep(nodes=nodes, coords=pending["coords"],
                                  anchor=pending["anchor"],
                                  anchor_value=pending["value"]))
        else:
            steps.append(AdhereStep(nodes=nodes, shared=pending["shared"],
                                    new_coords=pending["coords"],
                                    anchor=pending["anchor"],
                                    anchor_value=pending["value"]))
        pending = None

    for i, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        if kind == "coord":
            if pending is None:
                raise ScriptError(f"line {i}: coord outside a seed/adhere step", line=i)
            if len(rest) != 4:
                raise ScriptError(f"line {i}: coord needs id and 3 values", line=i)
            pending["coords"][rest[0]] = tuple(_parse_floats(rest[1:], i))
            continue
        flush(i)
        if kind in ("seed", "adhere"):
            kv = _kv(rest, i, _STEP_KEYS[kind])
            if "nodes" not in kv or "anchor" not in kv:
                raise ScriptError(f"line {i}: {kind} needs nodes= and anchor=", line=i)
            anchor = _parse_member(kv["anchor"], i)
            pending = {
                "kind": kind, "line": i,
                "nodes": tuple(kv["nodes"].split(",")),
                "shared": tuple(kv.get("shared", "").split(",")) if kv.get("shared") else (),
                "anchor": anchor,
                "value": _parse_floats([kv.get("value", "1")], i)[0],
                "coords": {},
            }
            if kind == "adhere" and not pending["shared"]:
                raise ScriptError(f"line {i}: adhere needs shared=", line=i)
        elif kind == "fuse":
            kv = _kv(rest, i, _STEP_KEYS["fuse"])
            if "members" not in kv:
                raise ScriptError(f"line {i}: fuse needs members=", line=i)
            steps.append(FuseStep(members=_parse_members(kv["members"], i)))
        elif kind == "place":
            kv = _kv(rest, i, _STEP_KEYS["place"])
            for need in ("node", "remove", "guess"):
                if need not in kv:
                    raise ScriptError(f"line {i}: place needs {need}=", line=i)
            guess = tuple(_parse_floats(kv["guess"].split(","), i))
            if len(guess) != 3:
                raise ScriptError(f"line {i}: guess needs 3 coordinates", line=i)
            steps.append(PlaceStep(node=kv["node"],
                                   remove=_parse_members(kv["remove"], i),
                                   guess=guess, fix=kv.get("fix")))
        elif kind == "orient":
            kv = _kv(rest, i, _STEP_KEYS["orient"])
            if "member" not in kv:
                raise ScriptError(f"line {i}: orient needs member=", line=i)
            sign = 1 if kv.get("sign", "+") in ("+", "+1", "1") else -1
            steps.append(OrientStep(member=_parse_member(kv["member"], i), sign=sign))
        elif kind == "expect":
            kv = _kv(rest, i, _STEP_KEYS["expect"])
            def opt_int(key):
                return int(kv[key]) if key in kv else None
            steps.append(ExpectStep(dim_w=opt_int("dim_w"), n_nodes=opt_int("nodes"),
                                    n_members=opt_int("members")))
        else:
            raise ScriptError(f"line {i}: unknown step {kind!r}", line=i)
    flush(len(lines) + 1)
    if not steps:
        raise UsageError("empty script: no seed step")
    if not isinstance(steps[0], SeedStep):
        raise UsageError("script must start with a seed step")
    return steps


def serialize_script(steps: Sequence[MorphoStep]) -> str:
    out = io.StringIO()
    print(f"{SCRIPT_MAGIC} {FORMAT_VERSION}", file=out)
    for step in steps:
        if isinstance(step, SeedStep):
            print(f"seed nodes={','.join(step.nodes)} "
                  f"anchor={_member_token(step.anchor)} value={fmt(step.anchor_value)}",
                  file=out)
            for n in step.nodes:
                p = step.coords[n]
                print(f"coord {n} {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}", file=out)
        elif isinstance(step, AdhereStep):
            print(f"adhere nodes={','.join(step.nodes)} shared={','.join(step.shared)} "
                  f"anchor={_member_token(step.anchor)} value={fmt(step.anchor_value)}",
                  file=out)
            for n, p in step.new_coords.items():
                print(f"coord {n} {fmt(p[0])} {fmt(p[1])} {fmt(p[2])}", file=out)
        elif isinstance(step, FuseStep):
            toks = ",".join(_member_token(m) for m in step.members)
            print(f"fuse members={toks}", file=out)
        elif isinstance(step, PlaceStep):
            toks = ",".join(_member_token(m) for m in step.remove)
            guess = ",".join(fmt(g) for g in step.guess)
            extra = f" fix={step.fix}" if step.fix else ""
            print(f"place node={step.node} remove={toks} guess={guess}{extra}", file=out)
        elif isinstance(step, OrientStep):
            print(f"orient member={_member_token(step.member)} "
                  f"sign={'+' if step.sign > 0 else '-'}", file=out)
        elif isinstance(step, ExpectStep):
            parts = []
            if step.dim_w is not None:
                parts.append(f"dim_w={step.dim_w}")
            if step.n_nodes is not None:
                parts.append(f"nodes={step.n_nodes}")
            if step.n_members is not None:
                parts.append(f"members={step.n_members}")
            print("expect " + " ".join(parts), file=out)
        else:
            raise UsageError(f"cannot serialize step {type(step).__name__}")
    return out.getvalue()


# -- fixtures --------------------------------------------------------------------

def fixture_path(name: str) -> Path:
    """Path of a packaged example script."""
    base = resources.files("tensecell") / "fixtures" / name
    with resources.as_file(base) as p:
        return Path(p)


def load_script(path) -> List[MorphoStep]:
    return parse_script(Path(path).read_text())


def load_structure(path):
    return parse_structure(Path(path).read_text())


def save_structure(path, state: StructureState, morpho: MorphoGraph | None = None):
    Path(path).write_text(serialize_structure(state, morpho))
