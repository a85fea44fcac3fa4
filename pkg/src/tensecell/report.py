"""Report rendering: delimited member tables plus matplotlib figures.

The report path writes a members.csv next to two PNG figures: a 3D view of
the structure (struts thick red, cables thin blue) and a heatmap of the
self-stress basis. Rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import UsageError  # noqa: E402
from .structure import (CABLE, STRUT, StructureState, count_report,  # noqa: E402
                        typology_from_stress)

STRUT_COLOR = "#c23b22"
CABLE_COLOR = "#1f77b4"
NEUTRAL_COLOR = "#777777"


def _resolve_typology(state: StructureState):
    labels = state.typology_map()
    if all(v == "unassigned" for v in labels.values()) and state.dim_w:
        try:
            labels = typology_from_stress(state)
        except Exception:
            pass
    return labels


def write_members_csv(state: StructureState, path):
    """Delimited member table: endpoints, length, typology, stress columns."""
    coords = state.coords()
    labels = _resolve_typology(state)
    combined = state.basis @ np.ones(state.dim_w) if state.dim_w else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["member", "node_i", "node_j", "length", "typology", "combined"]
        header += [f"w_{cid}" for cid in state.column_cells]
        writer.writerow(header)
        for k, (i, j) in enumerate(state.members):
            length = float(np.linalg.norm(coords[i] - coords[j]))
            row = [f"{i}-{j}", i, j, f"{length:.12g}", labels[(i, j)],
                   f"{combined[k]:.12g}" if combined is not None else ""]
            row += [f"{state.basis[k, c]:.12g}" for c in range(state.dim_w)]
            writer.writerow(row)


def render_structure_png(state: StructureState, path, title: str | None = None,
                         node_labels: bool = True):
    """3D line plot of the structure with typology coloring."""
    if not state.members:
        raise UsageError("cannot render an empty structure")
    coords = state.coords()
    labels = _resolve_typology(state)
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(111, projection="3d")
    for (i, j) in state.members:
        xs, ys, zs = zip(coords[i], coords[j])
        role = labels[(i, j)]
        if role == STRUT:
            ax.plot(xs, ys, zs, color=STRUT_COLOR, linewidth=3.5)
        elif role == CABLE:
            ax.plot(xs, ys, zs, color=CABLE_COLOR, linewidth=1.2)
        else:
            ax.plot(xs, ys, zs, color=NEUTRAL_COLOR, linewidth=1.2, linestyle="--")
    pts = np.array([coords[n] for n in state.node_ids])
    ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], color="black", s=14)
    if node_labels:
        for n in state.node_ids:
            ax.text(*coords[n], f" {n}", fontsize=8)
    n_strut = sum(1 for v in labels.values() if v == STRUT)
    n_cable = sum(1 for v in labels.values() if v == CABLE)
    ax.set_title(title or
                 f"{len(state.nodes)} nodes, {len(state.members)} members "
                 f"({n_strut} struts / {n_cable} cables), dim W = {state.dim_w}")
    ax.set_box_aspect((1, 1, 1))
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_basis_png(state: StructureState, path):
    """Heatmap of the self-stress basis, members down, states across."""
    if state.dim_w == 0:
        raise UsageError("structure has no self-stress basis to render")
    fig, ax = plt.subplots(figsize=(1.6 + 0.5 * state.dim_w,
                                    1.2 + 0.22 * len(state.members)))
    vmax = np.max(np.abs(state.basis))
    im = ax.imshow(state.basis, cmap="RdBu", vmin=-vmax, vmax=vmax, aspect="auto")
    ax.set_xticks(range(state.dim_w))
    ax.set_xticklabels(state.column_cells or [f"w{k+1}" for k in range(state.dim_w)],
                       rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(len(state.members)))
    ax.set_yticklabels([f"{i}-{j}" for i, j in state.members], fontsize=7)
    fig.colorbar(im, ax=ax, label="force density")
    ax.set_title("self-stress basis")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def write_report(state: StructureState, outdir, morpho=None):
    """Full report: members.csv, structure.png, basis.png, counts.txt."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_members_csv(state, out / "members.csv")
    render_structure_png(state, out / "structure.png")
    if state.dim_w:
        render_basis_png(state, out / "basis.png")
    rep = count_report(state)
    (out / "counts.txt").write_text(
        "\n".join([
            f"nodes {rep.n_nodes}",
            f"members {rep.n_members}",
            f"laman_bound {rep.laman_bound}",
            f"rank_A {rep.rank_a}",
            f"dim_W {rep.dim_w}",
            f"mechanisms {rep.mechanisms}",
            f"dof {rep.dof}",
        ]) + "\n")
    return out
