"""The five-node complete-graph tensegrity cell and its closed-form self-stress.

A cell in general position has exactly one self-stress state. Writing the
nodal equilibrium and eliminating pairwise with cross/dot products reduces
every force density to signed ratios of tetrahedron volumes: with
D_k = oriented_volume of the four nodes omitting node k, the density on
member (i, j) is proportional to (-1)**(i+j) * D_i * D_j. Scaling so a
chosen anchor member carries a prescribed value makes the state unique.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Tuple

import numpy as np

from .errors import DegenerateGeometryError, UsageError
from .geometry import as_point, cloud_diameter, general_position, oriented_volume

NodeId = str
Member = Tuple[NodeId, NodeId]


def node_key(n: NodeId):
    """Natural ordering key: numeric ids sort numerically, others lexically."""
    s = str(n)
    return (0, int(s), "") if s.lstrip("-").isdigit() else (1, 0, s)


def member_of(a: NodeId, b: NodeId) -> Member:
    a, b = str(a), str(b)
    if a == b:
        raise UsageError(f"member endpoints must differ, got ({a}, {b})")
    return (a, b) if node_key(a) < node_key(b) else (b, a)


def member_key(m: Member):
    return (node_key(m[0]), node_key(m[1]))


@dataclass(frozen=True)
class CellSpec:
    """Five distinct nodes, their coordinates, and the anchor member/value."""

    nodes: Tuple[NodeId, ...]
    coords: Tuple[np.ndarray, ...]
    anchor: Member
    anchor_value: float = 1.0

    def __post_init__(self):
        nodes = tuple(str(n) for n in self.nodes)
        if len(nodes) != 5 or len(set(nodes)) != 5:
            raise UsageError(f"a cell needs 5 distinct nodes, got {self.nodes}")
        coords = tuple(as_point(c) for c in self.coords)
        if len(coords) != 5:
            raise UsageError("a cell needs 5 coordinates")
        anchor = member_of(*self.anchor)
        if anchor[0] not in nodes or anchor[1] not in nodes:
            raise UsageError(f"anchor {anchor} is not a member of the cell")
        if self.anchor_value == 0:
            raise UsageError("anchor value must be nonzero")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "anchor", anchor)

    def coord_of(self, node: NodeId) -> np.ndarray:
        return self.coords[self.nodes.index(str(node))]

    def members(self) -> Tuple[Member, ...]:
        pairs = [member_of(a, b) for a, b in itertools.combinations(self.nodes, 2)]
        return tuple(sorted(pairs, key=member_key))

    def validate_geometry(self, tol: float | None = None):
        gp = general_position(self.coords) if tol is None else general_position(self.coords, tol)
        if not gp.ok:
            quad = tuple(self.nodes[i] for i in gp.offending)
            raise DegenerateGeometryError(
                f"cell nodes {quad} are coplanar (general position violated)",
                offending=quad,
            )


class CellKind(Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


@dataclass(frozen=True)
class CellStress:
    """Force densities for all ten members of a cell, keyed by member pair."""

    entries: Mapping[Member, float]

    def __post_init__(self):
        object.__setattr__(self, "entries", dict(self.entries))

    def vector(self, order: Sequence[Member]) -> np.ndarray:
        return np.array([self.entries[member_of(*m)] for m in order])

    def members(self) -> Tuple[Member, ...]:
        return tuple(sorted(self.entries, key=member_key))

    def __getitem__(self, m: Member) -> float:
        return self.entries[member_of(*m)]


def cell_self_stress(spec: CellSpec) -> CellStress:
    """Closed-form self-stress of a cell, anchored at spec.anchor.

    Raises DegenerateGeometryError (naming the offending quadruple) when the
    configuration is not in general position.
    """
    spec.validate_geometry()
    omit_volume = []
    for k in range(5):
        quad = [spec.coords[i] for i in range(5) if i != k]
        omit_volume.append(oriented_volume(*quad))
    raw = {}
    for i, j in itertools.combinations(range(5), 2):
        m = member_of(spec.nodes[i], spec.nodes[j])
        raw[m] = (-1.0) ** (i + j) * omit_volume[i] * omit_volume[j]
    scale = spec.anchor_value / raw[spec.anchor]
    return CellStress({m: v * scale for m, v in raw.items()})


def cell_equilibrium_residual(spec: CellSpec, stress: CellStress) -> float:
    """Max over nodes of |sum_j w_ij (x_i - x_j)|; zero for a true self-stress."""
    worst = 0.0
    for i, ni in enumerate(spec.nodes):
        force = np.zeros(3)
        for j, nj in enumerate(spec.nodes):
            if i == j:
                continue
            force += stress[(ni, nj)] * (spec.coords[i] - spec.coords[j])
        worst = max(worst, float(np.linalg.norm(force)))
    return worst


def classify_cell(stress: CellStress) -> CellKind:
    """Class of a cell from the sign structure of its self-stress.

    The ten members split by sign into a six-group and a four-group. The
    cell is TYPE_II when the four-group is a star on one node and TYPE_I
    when it is a triangle plus a disjoint edge.
    """
    members = stress.members()
    zeros = [m for m in members if stress[m] == 0.0]
    if zeros:
        raise DegenerateGeometryError(
            f"zero self-stress on {zeros}: not a valid unicellular tensegrity")
    pos = [m for m in members if stress[m] > 0]
    neg = [m for m in members if stress[m] < 0]
    if {len(pos), len(neg)} != {6, 4}:
        raise UsageError(
            f"sign partition is {len(pos)}/{len(neg)}, expected 6/4: "
            "stress is not a cell state")
    four = pos if len(pos) == 4 else neg
    counts = {}
    for a, b in four:
        counts[a] = counts.get(a, 0) + 1
        counts[b] = counts.get(b, 0) + 1
    degrees = sorted(counts.values(), reverse=True)
    if degrees[0] == 4:
        return CellKind.TYPE_II
    # triangle plus disjoint edge: three nodes of degree 2, two of degree 1
    if degrees == [2, 2, 2, 1, 1]:
        return CellKind.TYPE_I
    raise UsageError(f"four-group {four} is neither a star nor triangle+edge")


def cell_diameter(spec: CellSpec) -> float:
    return cloud_diameter(spec.coords)
