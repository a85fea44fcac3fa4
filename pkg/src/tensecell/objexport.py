"""Wavefront OBJ export of a structure as grouped line segments."""

from __future__ import annotations

from pathlib import Path

from .errors import UsageError
from .structure import CABLE, STRUT, StructureState, typology_from_stress


def export_obj(state: StructureState, path) -> None:
    """Write nodes as vertices and members as polylines under role groups.

    Vertices appear in canonical node order; struts and cables go under
    named groups, members with no assigned role under an unassigned group.
    The header comment carries the counts and state dimension.
    """
    if not state.nodes or not state.members:
        raise UsageError("cannot export an empty structure")
    labels = state.typology_map()
    if all(v == "unassigned" for v in labels.values()) and state.dim_w:
        try:
            labels = typology_from_stress(state)
        except Exception:
            pass
    index = {n: k + 1 for k, n in enumerate(state.node_ids)}
    groups = {STRUT: [], CABLE: [], "unassigned": []}
    for m in state.members:
        role = labels.get(m, "unassigned")
        groups.get(role, groups["unassigned"]).append(m)
    lines = [
        f"# tensecell structure: {len(state.nodes)} nodes, "
        f"{len(state.members)} members, dim_w={state.dim_w}",
        f"# struts={len(groups[STRUT])} cables={len(groups[CABLE])} "
        f"unassigned={len(groups['unassigned'])}",
    ]
    for n, p in state.nodes:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    for role in (STRUT, CABLE, "unassigned"):
        if not groups[role]:
            continue
        lines.append(f"g {role}s" if role != "unassigned" else "g unassigned")
        for i, j in groups[role]:
            lines.append(f"l {index[i]} {index[j]}")
    Path(path).write_text("\n".join(lines) + "\n")
