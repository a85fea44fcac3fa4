"""The generative loop: seed, adhesion, fusion, and self-stress bookkeeping.

Every operation consumes immutable snapshots and returns new ones together
with a StepLog. The engine maintains its own self-stress basis column by
column (one organism per column) and cross-checks the resulting rank
against the SVD nullspace of the equilibrium matrix after every step, so a
committed step is always oracle-consistent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .cell import (CellSpec, Member, NodeId, cell_self_stress, member_key,
                   member_of, node_key)
from .errors import (CannotFuseError, IncompleteBasisError,
                     MechanismRiskError, NumericDegeneracyError, ScriptError,
                     UsageError)
from .structure import (DEFAULT_RANK_TOL, MorphoCell, MorphoGraph,
                        StructureState, assemble_equilibrium_matrix,
                        make_state, matrix_rank, nullspace_basis)

#: Cap on virtual-cell candidate substructures examined per search.
DEFAULT_SEARCH_BUDGET = 20000

#: A coefficient below this (relative to its column norm) counts as zero
#: when deciding whether a member still carries stress.
COEFF_ZERO_TOL = 1e-9


def expected_delta_dim(e: int, v: int) -> int:
    """Change in the self-stress dimension for a step adding e edges, v nodes."""
    return e - 3 * v


@dataclass(frozen=True)
class StepLog:
    """Bookkeeping for one committed morphogenesis step."""

    kind: str
    detail: str
    delta_edges: int
    delta_nodes: int
    corollary_delta: int
    predicted_delta: int
    observed_delta: int
    cells_created: Tuple[Tuple[str, str], ...] = ()
    basis_note: str = ""

    @property
    def consistent(self) -> bool:
        return self.predicted_delta == self.observed_delta


# -- step records for scripting ---------------------------------------------

@dataclass(frozen=True)
class SeedStep:
    nodes: Tuple[NodeId, ...]
    coords: Dict[NodeId, tuple]
    anchor: Member
    anchor_value: float = 1.0


@dataclass(frozen=True)
class AdhereStep:
    nodes: Tuple[NodeId, ...]
    shared: Tuple[NodeId, ...]
    new_coords: Dict[NodeId, tuple]
    anchor: Member
    anchor_value: float = 1.0


@dataclass(frozen=True)
class FuseStep:
    members: Tuple[Member, ...]


@dataclass(frozen=True)
class PlaceStep:
    node: NodeId
    remove: Tuple[Member, ...]
    guess: tuple
    fix: Optional[NodeId] = None


@dataclass(frozen=True)
class OrientStep:
    member: Member
    sign: int = 1


@dataclass(frozen=True)
class ExpectStep:
    dim_w: Optional[int] = None
    n_nodes: Optional[int] = None
    n_members: Optional[int] = None


MorphoStep = object  # union of the step dataclasses above


def _observed_nullity(state: StructureState, tol: float) -> int:
    A = assemble_equilibrium_matrix(state)
    return nullspace_basis(A, tol).shape[1]


def seed(spec: CellSpec, tol: float = DEFAULT_RANK_TOL):
    """Start a structure from a single cell."""
    stress = cell_self_stress(spec)
    members = spec.members()
    column = stress.vector(members)
    coords = {n: spec.coord_of(n) for n in spec.nodes}
    morpho = MorphoGraph().with_cell(MorphoCell(
        cell_id="c1", kind="regular",
        node_set=frozenset(spec.nodes), edge_set=frozenset(members)))
    state = make_state(coords, members, np.array([column]).T, column_cells=("c1",))
    observed = _observed_nullity(state, tol)
    if observed != 1:
        raise NumericDegeneracyError(
            f"seed cell yields {observed} states instead of 1")
    log = StepLog(kind="seed", detail=f"cell c1 {spec.nodes}",
                  delta_edges=10, delta_nodes=5,
                  corollary_delta=1, predicted_delta=1, observed_delta=1,
                  cells_created=(("c1", "regular"),))
    return state, morpho, log


def adhere(state: StructureState, morpho: MorphoGraph, spec: CellSpec,
           shared: Iterable[NodeId], tol: float = DEFAULT_RANK_TOL,
           budget: int = DEFAULT_SEARCH_BUDGET):
    """Attach a cell to the structure, sharing `shared` existing nodes.

    All cell members are unioned in; the basis gains the cell's own state
    plus any virtual-cell states needed to span the enlarged nullspace.
    """
    shared = tuple(sorted({str(n) for n in shared}, key=node_key))
    cell_nodes = set(spec.nodes)
    if not set(shared) <= cell_nodes:
        raise UsageError(f"shared nodes {shared} are not all in the cell")
    existing = set(state.node_ids)
    if not set(shared) <= existing:
        raise UsageError(f"shared nodes {sorted(set(shared) - existing)} do not exist")
    new_nodes = tuple(sorted(cell_nodes - set(shared), key=node_key))
    if set(new_nodes) & existing:
        raise UsageError(
            f"nodes {sorted(set(new_nodes) & existing)} already exist but were "
            "not declared shared")
    if len(shared) in (0, 1, 2):
        raise MechanismRiskError(
            f"sharing {len(shared)} nodes would leave finite mechanisms; share 3 or 4")
    spec.validate_geometry()
    scale = max(state.diameter(), 1.0)
    for n in shared:
        if not np.allclose(spec.coord_of(n), state.coord_of(n), rtol=0, atol=1e-9 * scale):
            raise UsageError(f"coordinates of shared node {n} do not match the structure")

    cell_members = spec.members()
    new_members = tuple(m for m in cell_members if m not in set(state.members))
    if len(shared) == 5 and not new_members:
        raise UsageError("cell shares all five nodes and adds no members: no-op")
    e, v = len(new_members), len(new_nodes)
    corollary = expected_delta_dim(e, v)

    members = tuple(sorted(set(state.members) | set(new_members), key=member_key))
    index = {m: k for k, m in enumerate(members)}
    basis = np.zeros((len(members), state.dim_w + 1))
    for old_i, m in enumerate(state.members):
        basis[index[m], :state.dim_w] = state.basis[old_i]
    stress = cell_self_stress(spec)
    for m in cell_members:
        basis[index[m], state.dim_w] = stress[m]

    coords = {n: p for n, p in state.nodes}
    coords.update({n: spec.coord_of(n) for n in new_nodes})
    cell_id = morpho.next_id()
    new_morpho = morpho.with_cell(MorphoCell(
        cell_id=cell_id, kind="regular",
        node_set=frozenset(spec.nodes), edge_set=frozenset(cell_members)))
    typology = {m: lbl for m, lbl in state.typology}
    new_state = make_state(coords, members, basis,
                           column_cells=state.column_cells + (cell_id,),
                           typology=typology)

    observed_total = _observed_nullity(new_state, tol)
    observed = observed_total - state.dim_w
    if observed != corollary:
        raise NumericDegeneracyError(
            f"adhesion changed the state count by {observed}, counting rule "
            f"gives {corollary}: geometry is not generic for this step")
    created = [(cell_id, "regular")]
    needed = observed_total - new_state.dim_w
    if needed < 0:
        raise NumericDegeneracyError("cell state is dependent on the existing basis")
    if needed > 0:
        found = find_virtual_cells(new_state, new_morpho, needed, tol=tol, budget=budget)
        for v_nodes, v_edges, vec in found:
            vid = new_morpho.next_id()
            new_morpho = new_morpho.with_cell(MorphoCell(
                cell_id=vid, kind="virtual",
                node_set=frozenset(v_nodes), edge_set=frozenset(v_edges)))
            basis = np.column_stack([new_state.basis, vec])
            new_state = make_state(coords, members, basis,
                                   column_cells=new_state.column_cells + (vid,),
                                   typology=typology)
            created.append((vid, "virtual"))
    if matrix_rank(new_state.basis, tol) != new_state.dim_w:
        raise NumericDegeneracyError("basis lost linear independence during adhesion")
    log = StepLog(kind="adhere",
                  detail=f"cell {cell_id} {spec.nodes} sharing {shared}",
                  delta_edges=e, delta_nodes=v,
                  corollary_delta=corollary, predicted_delta=corollary,
                  observed_delta=observed,
                  cells_created=tuple(created),
                  basis_note=f"+1 cell state, +{needed} virtual state(s)")
    return new_state, new_morpho, log


def fuse(state: StructureState, morpho: MorphoGraph, remove: Iterable[Member],
         tol: float = DEFAULT_RANK_TOL):
    """Remove members whose self-stress can be cancelled, shrinking the basis.

    Per removed member, the column with the largest scale-normalized
    coefficient is the elimination pivot; every other column is combined
    with it so the member carries zero stress, then the pivot is dropped.
    A member whose coefficients were cancelled by an earlier elimination in
    the same call is removed for free (constrained multi-edge fusion).
    """
    removal = []
    seen = set()
    for m in remove:
        mm = member_of(*m)
        if mm in seen:
            continue
        seen.add(mm)
        if mm not in set(state.members):
            raise UsageError(f"member {mm} is not part of the structure")
        removal.append(mm)
    if not removal:
        raise UsageError("no members to remove")
    if state.dim_w == 0:
        raise CannotFuseError("structure has no self-stress to cancel")

    members = list(state.members)
    W = state.basis.copy()
    col_cells = list(state.column_cells)
    morpho2 = morpho
    notes = []
    drops = 0
    for mm in removal:
        ridx = members.index(mm)
        row = W[ridx, :]
        norms = np.linalg.norm(W, axis=0)
        norms[norms == 0] = 1.0
        rel = np.abs(row) / norms
        live = rel > COEFF_ZERO_TOL
        if not np.any(live):
            # Zero from the start means nothing to cancel; zero after an
            # earlier elimination in this call is the constrained case.
            orig = state.basis[state.member_index(mm), :]
            orig_norms = np.linalg.norm(state.basis, axis=0)
            orig_norms[orig_norms == 0] = 1.0
            if not np.any(np.abs(orig) / orig_norms > COEFF_ZERO_TOL):
                raise CannotFuseError(
                    f"member {mm} carries no self-stress in any state")
            notes.append(f"{mm}: cancelled jointly with an earlier removal")
            continue
        pivot = int(np.argmax(rel))
        pe = row[pivot]
        for j in range(W.shape[1]):
            if j == pivot or abs(row[j]) <= COEFF_ZERO_TOL * norms[j]:
                continue
            W[:, j] = W[:, j] - (row[j] / pe) * W[:, pivot]
            fused_id = morpho2.next_id()
            a = morpho2.cell(col_cells[j])
            b = morpho2.cell(col_cells[pivot])
            morpho2 = morpho2.with_cell(MorphoCell(
                cell_id=fused_id, kind="fused",
                node_set=a.node_set | b.node_set,
                edge_set=(a.edge_set | b.edge_set) - {mm}))
            morpho2 = morpho2.retire([col_cells[j]])
            col_cells[j] = fused_id
        morpho2 = morpho2.retire([col_cells[pivot]])
        notes.append(f"{mm}: pivot {col_cells[pivot]}")
        W = np.delete(W, pivot, axis=1)
        del col_cells[pivot]
        drops += 1
        if W.shape[1] == 0:
            raise CannotFuseError(
                "removing these members would leave no self-stress state")
    # residuals on removed rows must be zero before the rows are deleted
    for mm in removal:
        ridx = members.index(mm)
        norms = np.linalg.norm(W, axis=0)
        norms[norms == 0] = 1.0
        bad = np.abs(W[ridx, :]) / norms
        if np.any(bad > 1e-8):
            raise NumericDegeneracyError(
                f"elimination left residual stress {bad.max():.2e} on {mm}")
    keep = [i for i, m in enumerate(members) if m not in set(removal)]
    members2 = tuple(members[i] for i in keep)
    W2 = W[keep, :]
    if matrix_rank(W2, tol) != W2.shape[1]:
        raise NumericDegeneracyError("fusion produced a rank-deficient basis")
    typology = {m: lbl for m, lbl in state.typology if member_of(*m) not in set(removal)}
    coords = dict(state.nodes)
    morpho2 = morpho2.strip_members(removal)
    new_state = make_state(coords, members2, W2, column_cells=col_cells,
                           typology=typology)
    observed_total = _observed_nullity(new_state, tol)
    if observed_total != new_state.dim_w:
        raise NumericDegeneracyError(
            f"engine keeps {new_state.dim_w} states but the nullspace has "
            f"{observed_total} after fusion")
    log = StepLog(kind="fuse", detail=f"removed {removal}",
                  delta_edges=-len(removal), delta_nodes=0,
                  corollary_delta=-len(removal), predicted_delta=-drops,
                  observed_delta=new_state.dim_w - state.dim_w,
                  basis_note="; ".join(notes))
    return new_state, morpho2, log


# -- virtual-cell discovery ---------------------------------------------------

def _degree_map(members: Iterable[Member]) -> Dict[NodeId, int]:
    deg: Dict[NodeId, int] = {}
    for a, b in members:
        deg[a] = deg.get(a, 0) + 1
        deg[b] = deg.get(b, 0) + 1
    return deg


def _strip(members: set, edge: Member) -> set:
    """Remove edge, then peel nodes left with fewer than four members."""
    out = set(members)
    out.discard(edge)
    while True:
        deg = _degree_map(out)
        weak = [n for n, d in deg.items() if d < 4]
        if not weak:
            return out
        out = {m for m in out if m[0] not in weak and m[1] not in weak}


def _sub_nullspace(state: StructureState, sub_members: Sequence[Member], tol: float):
    nodes = sorted({n for m in sub_members for n in m}, key=node_key)
    coords = state.coords()
    row = {n: k for k, n in enumerate(nodes)}
    A = np.zeros((3 * len(nodes), len(sub_members)))
    for c, (i, j) in enumerate(sub_members):
        d = coords[i] - coords[j]
        A[3 * row[i]:3 * row[i] + 3, c] = d
        A[3 * row[j]:3 * row[j] + 3, c] = -d
    return nullspace_basis(A, tol)


#: Phase-one strip combinations enumerated eagerly for ranking before the
#: search falls back to streaming order.
PRODUCT_SCAN_CAP = 256


def _sub_rank_key(sub: frozenset):
    nodes = sorted({n for m in sub for n in m}, key=node_key)
    return (len(sub), tuple(node_key(n) for n in nodes),
            tuple(sorted(member_key(m) for m in sub)))


def find_virtual_cells(state: StructureState, morpho: MorphoGraph, needed: int,
                       tol: float = DEFAULT_RANK_TOL,
                       budget: int = DEFAULT_SEARCH_BUDGET):
    """Search for unicellular substructures whose states complete the basis.

    Strategy: strip one cell-private edge per live organism (peeling any
    node left with fewer than four members), then keep stripping edges,
    preferring ones whose endpoints both have degree five or more, until a
    single-state substructure remains. Candidate substructures are ranked
    smallest first with ties broken by node set, so the search favors the
    tightest organism on the oldest nodes. A candidate state is kept only
    if it is linearly independent of the current columns.
    """
    if needed < 0:
        raise UsageError("needed must be nonnegative")
    if needed == 0:
        return []
    member_set = set(state.members)
    organisms = [c for c in morpho.live_cells() if c.edge_set & member_set]
    edge_ownership: Dict[Member, int] = {}
    for c in organisms:
        for e in c.edge_set:
            if e in member_set:
                edge_ownership[e] = edge_ownership.get(e, 0) + 1
    private: List[List[Member]] = []
    for c in sorted(organisms, key=lambda c: c.cell_id):
        own = sorted((e for e in c.edge_set
                      if e in member_set and edge_ownership.get(e) == 1),
                     key=member_key)
        private.append(own if own else [None])

    found: List[Tuple[tuple, tuple, np.ndarray]] = []
    W_cols = [state.basis[:, k] for k in range(state.dim_w)]
    tried = 0
    seen: set = set()

    def independent(vec: np.ndarray) -> bool:
        if not W_cols:
            return True
        M = np.column_stack(W_cols)
        coef, *_ = np.linalg.lstsq(M, vec, rcond=None)
        resid = np.linalg.norm(vec - M @ coef)
        return resid > 1e-8 * np.linalg.norm(vec)

    def pad(sub_members, vec):
        out = np.zeros(len(state.members))
        for v, m in zip(vec, sub_members):
            out[state.member_index(m)] = v
        return out

    def evaluate(sub) -> int:
        """Memoized nullity of a substructure; accepts its state at nullity 1."""
        nonlocal tried
        key = frozenset(sub)
        if len(sub) < 10 or key in seen:
            return 0
        seen.add(key)
        tried += 1
        sub_members = tuple(sorted(sub, key=member_key))
        ns = _sub_nullspace(state, sub_members, tol)
        if ns.shape[1] == 1:
            vec = ns[:, 0]
            for v in vec:
                if abs(v) > 1e-12:
                    if v < 0:
                        vec = -vec
                    break
            full = pad(sub_members, vec)
            if independent(full):
                nodes = tuple(sorted({n for m in sub_members for n in m},
                                     key=node_key))
                found.append((nodes, sub_members, full))
                W_cols.append(full)
        return ns.shape[1]

    def deeper(sub):
        """Strip further edges depth-first until one state remains.

        Stripping an edge drops the state count, so recursion depth is
        bounded by the substructure's nullity; memoization prunes routes
        that reconverge on the same substructure.
        """
        if tried >= budget or len(found) >= needed:
            return
        remaining = evaluate(sub)
        if remaining <= 1:
            return
        deg = _degree_map(sub)
        ranked = sorted(sub, key=lambda e: (0 if deg[e[0]] >= 5 and deg[e[1]] >= 5
                                            else 1, member_key(e)))
        for e in ranked:
            if tried >= budget or len(found) >= needed:
                return
            deeper(_strip(set(sub), e))

    def stripped_for(choice) -> frozenset:
        sub = set(member_set)
        for e in choice:
            if e is not None and e in sub:
                sub = _strip(sub, e)
        return frozenset(sub)

    product_stream = itertools.product(*private)
    head = list(itertools.islice(product_stream, PRODUCT_SCAN_CAP))
    ranked_subs = sorted({stripped_for(c) for c in head}, key=_sub_rank_key)
    for sub in ranked_subs:
        if tried >= budget or len(found) >= needed:
            break
        deeper(sub)
    for choice in product_stream:  # beyond the ranked head, streaming order
        if tried >= budget or len(found) >= needed:
            break
        deeper(stripped_for(choice))

    if len(found) < needed:
        raise IncompleteBasisError(
            f"virtual-cell search found {len(found)} of {needed} states",
            diagnostics={"candidates_tried": tried, "budget": budget})
    return found[:needed]


# -- script execution ---------------------------------------------------------

@dataclass
class RunResult:
    state: StructureState
    morpho: MorphoGraph
    logs: List[StepLog] = field(default_factory=list)


def run_script(steps: Sequence[MorphoStep], tol: float = DEFAULT_RANK_TOL,
               budget: int = DEFAULT_SEARCH_BUDGET) -> RunResult:
    """Fold a step sequence into a structure, aborting on the first error."""
    from .placement import build_fusion_constraint, solve_on_constraints

    if not steps:
        raise UsageError("empty script: no seed step")
    if not isinstance(steps[0], SeedStep):
        raise UsageError("script must start with a seed step")
    state = morpho = None
    logs: List[StepLog] = []
    placements: Dict[NodeId, np.ndarray] = {}

    def coords_for(step, nodes) -> dict:
        out = {}
        for n in nodes:
            if n in step.new_coords:
                out[n] = step.new_coords[n]
            elif n in placements:
                out[n] = placements[n]
            elif state is not None and n in set(state.node_ids):
                out[n] = state.coord_of(n)
            else:
                raise UsageError(f"no coordinates known for node {n}")
        return out

    for idx, step in enumerate(steps):
        try:
            if isinstance(step, SeedStep):
                if idx != 0:
                    raise UsageError("seed may only appear first")
                spec = CellSpec(nodes=step.nodes,
                                coords=tuple(step.coords[n] for n in step.nodes),
                                anchor=step.anchor, anchor_value=step.anchor_value)
                state, morpho, log = seed(spec, tol)
                logs.append(log)
            elif isinstance(step, AdhereStep):
                cmap = coords_for(step, step.nodes)
                spec = CellSpec(nodes=step.nodes,
                                coords=tuple(cmap[n] for n in step.nodes),
                                anchor=step.anchor, anchor_value=step.anchor_value)
                state, morpho, log = adhere(state, morpho, spec, step.shared,
                                            tol=tol, budget=budget)
                logs.append(log)
            elif isinstance(step, FuseStep):
                state, morpho, log = fuse(state, morpho, step.members, tol)
                logs.append(log)
            elif isinstance(step, PlaceStep):
                constraint = build_fusion_constraint(state, step.remove, fix=step.fix)
                solution = solve_on_constraints([constraint], step.guess)
                placements[str(step.node)] = solution
                logs.append(StepLog(
                    kind="place", detail=f"node {step.node} at {tuple(solution)}",
                    delta_edges=0, delta_nodes=0, corollary_delta=0,
                    predicted_delta=0, observed_delta=0))
            elif isinstance(step, OrientStep):
                if state is None or state.dim_w != 1:
                    raise UsageError("orient requires exactly one self-stress state")
                k = state.member_index(step.member)
                val = state.basis[k, 0]
                if val == 0:
                    raise UsageError(f"cannot orient on zero entry {step.member}")
                flip = -1.0 if (val > 0) != (step.sign > 0) else 1.0
                basis = state.basis * flip
                state = make_state(dict(state.nodes), state.members, basis,
                                   column_cells=state.column_cells,
                                   typology=dict(state.typology))
                logs.append(StepLog(
                    kind="orient", detail=f"{step.member} sign {step.sign:+d}",
                    delta_edges=0, delta_nodes=0, corollary_delta=0,
                    predicted_delta=0, observed_delta=0))
            elif isinstance(step, ExpectStep):
                checks = [("dim_w", step.dim_w, state.dim_w if state else None),
                          ("nodes", step.n_nodes, len(state.nodes) if state else None),
                          ("members", step.n_members, len(state.members) if state else None)]
                for name, want, got in checks:
                    if want is not None and want != got:
                        raise UsageError(f"expectation failed: {name}={got}, expected {want}")
            else:
                raise UsageError(f"unknown step type {type(step).__name__}")
        except Exception as exc:
            raise ScriptError(f"step {idx + 1} ({type(step).__name__}): {exc}",
                              step_index=idx,
                              partial=RunResult(state, morpho, logs)) from exc
    return RunResult(state, morpho, logs)
