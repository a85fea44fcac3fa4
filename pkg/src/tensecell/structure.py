"""The evolving structure: equilibrium matrix, self-stress basis, counts, typology.

A StructureState is an immutable snapshot. Node and member order is
canonical everywhere (natural-sorted ids, lexicographic member pairs) so
matrices and serialized files are reproducible run to run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cell import Member, NodeId, member_key, member_of, node_key
from .errors import (AmbiguousTypologyError, DegenerateMemberError,
                     InvariantViolation, UsageError)
from .geometry import as_point, cloud_diameter

#: Relative singular-value threshold for rank decisions.
DEFAULT_RANK_TOL = 1e-9

CABLE = "cable"
STRUT = "strut"
REMOVAL_CANDIDATE = "removed-candidate"
UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class StructureState:
    """Nodes, members, self-stress basis and member typology.

    basis has one row per member (canonical order) and one column per
    self-stress state; column_cells names the organism each column
    stabilizes.
    """

    nodes: Tuple[Tuple[NodeId, Tuple[float, float, float]], ...]
    members: Tuple[Member, ...]
    basis: np.ndarray
    column_cells: Tuple[str, ...] = ()
    typology: Tuple[Tuple[Member, str], ...] = ()

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim == 1:
            basis = basis.reshape(-1, 1) if basis.size else basis.reshape(0, 0)
        if basis.size and basis.shape[0] != len(self.members):
            raise UsageError(
                f"basis has {basis.shape[0]} rows for {len(self.members)} members")
        basis = basis.copy()
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    # -- accessors ---------------------------------------------------------
    @property
    def node_ids(self) -> Tuple[NodeId, ...]:
        return tuple(n for n, _ in self.nodes)

    def coords(self) -> Dict[NodeId, np.ndarray]:
        return {n: np.array(p) for n, p in self.nodes}

    def coord_of(self, node: NodeId) -> np.ndarray:
        for n, p in self.nodes:
            if n == str(node):
                return np.array(p)
        raise UsageError(f"unknown node {node!r}")

    @property
    def dim_w(self) -> int:
        return 0 if self.basis.size == 0 else self.basis.shape[1]

    def diameter(self) -> float:
        return cloud_diameter([p for _, p in self.nodes])

    def member_index(self, m: Member) -> int:
        try:
            return self.members.index(member_of(*m))
        except ValueError:
            raise UsageError(f"unknown member {m}") from None

    def typology_map(self) -> Dict[Member, str]:
        base = {m: UNASSIGNED for m in self.members}
        base.update(dict(self.typology))
        return base

    def with_typology(self, labels: Mapping[Member, str]) -> "StructureState":
        canon = tuple(sorted(((member_of(*m), v) for m, v in labels.items()),
                             key=lambda kv: member_key(kv[0])))
        return replace(self, typology=canon)


def make_state(coords: Mapping[NodeId, Sequence[float]],
               members: Iterable[Member],
               basis: np.ndarray | Sequence[Sequence[float]] = (),
               column_cells: Sequence[str] = (),
               typology: Mapping[Member, str] | None = None) -> StructureState:
    """Normalize raw data into a canonical StructureState."""
    node_items = tuple(sorted(((str(n), tuple(float(x) for x in as_point(p)))
                               for n, p in coords.items()),
                              key=lambda kv: node_key(kv[0])))
    ids = {n for n, _ in node_items}
    given = []
    for m in members:
        mm = member_of(*m)
        if mm[0] not in ids or mm[1] not in ids:
            raise UsageError(f"member {mm} references unknown nodes")
        given.append(mm)
    if len(given) != len(set(given)):
        raise UsageError("duplicate members")
    canon_members = tuple(sorted(given, key=member_key))
    basis_arr = np.asarray(basis, dtype=float)
    if basis_arr.size == 0:
        basis_arr = np.zeros((len(canon_members), 0))
    elif given != list(canon_members):
        # rows were supplied in the caller's member order; remap to canonical
        if basis_arr.ndim == 1:
            basis_arr = basis_arr.reshape(-1, 1)
        remap = np.empty_like(basis_arr)
        for src, m in enumerate(given):
            remap[canon_members.index(m)] = basis_arr[src]
        basis_arr = remap
    ty = tuple(sorted(((member_of(*m), str(v)) for m, v in (typology or {}).items()),
                      key=lambda kv: member_key(kv[0])))
    return StructureState(nodes=node_items, members=canon_members,
                          basis=basis_arr, column_cells=tuple(column_cells),
                          typology=ty)


# -- equilibrium matrix ----------------------------------------------------

def assemble_equilibrium_matrix(state: StructureState) -> np.ndarray:
    """Dense 3|V| x |E| matrix A with A w = 0 characterizing self-stress.

    The column for member (i, j) holds x_i - x_j in node i's row block and
    the negation in node j's block. Row order follows ascending node ids,
    column order the canonical member order.
    """
    coords = state.coords()
    order = list(state.node_ids)
    row = {n: k for k, n in enumerate(order)}
    A = np.zeros((3 * len(order), len(state.members)))
    scale = state.diameter()
    for c, (i, j) in enumerate(state.members):
        d = coords[i] - coords[j]
        if np.linalg.norm(d) <= 1e-12 * max(scale, 1.0):
            raise DegenerateMemberError(f"member {(i, j)} has coincident endpoints")
        A[3 * row[i]:3 * row[i] + 3, c] = d
        A[3 * row[j]:3 * row[j] + 3, c] = -d
    return A


def nullspace_basis(A: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal right-nullspace basis of A via SVD.

    Singular values below tol * sigma_max count as zero. Returns an
    (n_cols x nullity) array; nullity may be zero.
    """
    if tol <= 0:
        raise UsageError("tolerance must be positive")
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise UsageError("empty equilibrium matrix")
    u, s, vt = np.linalg.svd(A)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return vt[rank:].T


def matrix_rank(A: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    smax = s[0] if s.size else 0.0
    return int(np.sum(s > tol * smax)) if smax > 0 else 0


# -- counting --------------------------------------------------------------

@dataclass(frozen=True)
class CountReport:
    """Edge/node/rank bookkeeping for one structure snapshot.

    dof follows the first counting branch (valid from five nodes up).
    For 3- or 4-node structures the pair-count branch is also reported in
    dof_small and flagged.
    """

    n_nodes: int
    n_members: int
    laman_bound: int
    rank_a: int
    dim_w: int
    mechanisms: int
    dof: int
    dof_small: Optional[int] = None

    @property
    def maxwell_consistent(self) -> bool:
        return self.dim_w - self.mechanisms == self.n_members - 3 * self.n_nodes + 6


def count_report(state: StructureState, tol: float = DEFAULT_RANK_TOL) -> CountReport:
    n_v = len(state.nodes)
    n_e = len(state.members)
    if n_v < 3:
        raise UsageError(f"count_report needs at least 3 nodes, got {n_v}")
    A = assemble_equilibrium_matrix(state)
    rank = matrix_rank(A, tol)
    dim_w = n_e - rank
    mechanisms = 3 * n_v - 6 - rank
    laman = 6 + n_e - 3 * n_v
    dof = dim_w - laman
    dof_small = (n_v * (n_v - 1)) // 2 - n_e if n_v <= 4 else None
    return CountReport(n_nodes=n_v, n_members=n_e, laman_bound=laman,
                       rank_a=rank, dim_w=dim_w, mechanisms=mechanisms,
                       dof=dof, dof_small=dof_small)


# -- typology --------------------------------------------------------------

def typology_from_stress(state: StructureState,
                         combination: Sequence[float] | None = None,
                         tol: float = 1e-9) -> Dict[Member, str]:
    """Member roles from the sign of W @ combination.

    combination defaults to all ones over the basis columns. Entries with
    magnitude below tol * max|entry| are ambiguous and raise.
    """
    if state.dim_w == 0:
        raise UsageError("structure has no self-stress state")
    comb = np.ones(state.dim_w) if combination is None else np.asarray(combination, float)
    if comb.shape != (state.dim_w,):
        raise UsageError(
            f"combination needs {state.dim_w} coefficients, got {comb.shape}")
    w = state.basis @ comb
    biggest = np.max(np.abs(w)) if w.size else 0.0
    ambiguous = [m for m, v in zip(state.members, w) if abs(v) <= tol * biggest]
    if ambiguous:
        raise AmbiguousTypologyError(
            f"near-zero combined stress on {len(ambiguous)} member(s)",
            members=ambiguous)
    return {m: (CABLE if v > 0 else STRUT) for m, v in zip(state.members, w)}


# -- morphogenesis history graph -------------------------------------------

@dataclass(frozen=True)
class MorphoCell:
    """One organism in the history graph: a regular, virtual, or fused cell."""

    cell_id: str
    kind: str  # regular | virtual | fused
    node_set: frozenset
    edge_set: frozenset
    live: bool = True

    def __post_init__(self):
        object.__setattr__(self, "node_set", frozenset(str(n) for n in self.node_set))
        object.__setattr__(self, "edge_set",
                           frozenset(member_of(*e) for e in self.edge_set))


@dataclass(frozen=True)
class MorphoGraph:
    """Cells-as-vertices history of the generative process.

    Adjacency (shared members between two cells) is derived from the edge
    sets on demand, which keeps the stored data minimal and the invariant
    "shared set equals edge-set intersection" true by construction.
    """

    cells: Tuple[MorphoCell, ...] = ()

    def cell(self, cell_id: str) -> MorphoCell:
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        raise UsageError(f"unknown cell {cell_id!r}")

    def shared_members(self, a: str, b: str) -> Tuple[Member, ...]:
        shared = self.cell(a).edge_set & self.cell(b).edge_set
        return tuple(sorted(shared, key=member_key))

    def adjacency(self) -> Dict[Tuple[str, str], Tuple[Member, ...]]:
        out = {}
        for ca, cb in itertools.combinations(self.cells, 2):
            shared = ca.edge_set & cb.edge_set
            if shared:
                key = tuple(sorted((ca.cell_id, cb.cell_id)))
                out[key] = tuple(sorted(shared, key=member_key))
        return out

    def with_cell(self, cell: MorphoCell) -> "MorphoGraph":
        if any(c.cell_id == cell.cell_id for c in self.cells):
            raise UsageError(f"duplicate cell id {cell.cell_id!r}")
        return MorphoGraph(self.cells + (cell,))

    def retire(self, cell_ids: Iterable[str]) -> "MorphoGraph":
        dead = {str(c) for c in cell_ids}
        return MorphoGraph(tuple(
            replace(c, live=False) if c.cell_id in dead else c for c in self.cells))

    def strip_members(self, members: Iterable[Member]) -> "MorphoGraph":
        """Drop removed members from live organisms; retired cells keep history."""
        gone = {member_of(*m) for m in members}
        cells = []
        for c in self.cells:
            if c.live and c.edge_set & gone:
                cells.append(replace(c, edge_set=c.edge_set - gone))
            else:
                cells.append(c)
        return MorphoGraph(tuple(cells))

    def live_cells(self, kinds=("regular", "fused")) -> Tuple[MorphoCell, ...]:
        return tuple(c for c in self.cells if c.live and c.kind in kinds)

    def next_id(self) -> str:
        return f"c{len(self.cells) + 1}"


# -- invariant audit ---------------------------------------------------------

def audit(state: StructureState, morpho: MorphoGraph | None = None,
          tol: float = DEFAULT_RANK_TOL) -> list:
    """Check structural invariants; return a list of violation strings."""
    problems = []
    ids = set(state.node_ids)
    for m in state.members:
        if m[0] not in ids or m[1] not in ids:
            problems.append(f"member {m} references missing nodes")
    if state.dim_w:
        A = assemble_equilibrium_matrix(state)
        scale = max(state.diameter(), 1e-300)
        for k in range(state.dim_w):
            w = state.basis[:, k]
            norm = np.linalg.norm(w)
            if norm == 0:
                problems.append(f"basis column {k} is zero")
                continue
            resid = np.linalg.norm(A @ w)
            if resid > 1e-9 * norm * scale:
                problems.append(
                    f"equilibrium-residual: column {k} ({state.column_cells[k] if k < len(state.column_cells) else k}) "
                    f"residual {resid:.3e} exceeds 1e-9*|w|*diameter")
        if matrix_rank(state.basis, tol) != state.dim_w:
            problems.append("basis columns are linearly dependent")
        null = nullspace_basis(A, tol)
        if null.shape[1] != state.dim_w:
            problems.append(
                f"basis-completeness: stored {state.dim_w} states, "
                f"nullspace dimension is {null.shape[1]}")
        else:
            # mutual projection: each stored column must lie in the nullspace
            proj = null @ (null.T @ state.basis)
            resid = np.linalg.norm(proj - state.basis) / max(np.linalg.norm(state.basis), 1e-300)
            if resid > 1e-8:
                problems.append(f"basis-span: projection residual {resid:.3e}")
    if len(state.nodes) >= 3:
        rep = count_report(state, tol)
        if not rep.maxwell_consistent:
            problems.append("maxwell-identity: dim W - mechanisms != |E| - 3|V| + 6")
    labels = dict(state.typology)
    for m, v in labels.items():
        if v not in (CABLE, STRUT, REMOVAL_CANDIDATE, UNASSIGNED):
            problems.append(f"typology label {v!r} on {m} is not recognized")
        if member_of(*m) not in state.members:
            problems.append(f"typology references unknown member {m}")
    if morpho is not None:
        member_set = set(state.members)
        for c in morpho.live_cells(kinds=("regular", "virtual", "fused")):
            if not c.edge_set <= member_set:
                problems.append(
                    f"live cell {c.cell_id} references removed members "
                    f"{sorted(c.edge_set - member_set)}")
    return problems


def assert_valid(state: StructureState, morpho: MorphoGraph | None = None,
                 tol: float = DEFAULT_RANK_TOL):
    problems = audit(state, morpho, tol)
    if problems:
        raise InvariantViolation("; ".join(problems), violations=problems)
