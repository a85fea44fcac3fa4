"""Geometric constraint surfaces that make multi-member fusion feasible.

Removing two members from the same pair of organisms is only possible when
the new nodes sit where the combined force densities cancel. Depending on
whether the removed members share a node and how many nodes the new cell
shares with the structure, the locus for the free node is a plane, a
bilinear variety over two unknown nodes, or a quadric surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cell import Member, member_of
from .errors import (DegenerateGeometryError, NoSolutionFoundError,
                     UsageError)
from .geometry import LinearForm3, as_point, cloud_diameter, linear_form
from .structure import StructureState


def _det4(rows) -> float:
    return float(np.linalg.det(np.asarray(rows, dtype=float)))


def _homrow(p) -> np.ndarray:
    p = as_point(p)
    return np.array([1.0, p[0], p[1], p[2]])


@dataclass(frozen=True)
class PlaneConstraint:
    """All valid positions satisfy form(E) = 0."""

    form: LinearForm3
    scale: float

    def residual(self, p) -> float:
        g = np.linalg.norm(self.form.gradient)
        if g == 0:
            raise DegenerateGeometryError("plane constraint has zero gradient")
        return self.form(p) / g

    def gradient(self, p) -> np.ndarray:
        return self.form.gradient


@dataclass(frozen=True)
class BilinearConstraint:
    """Pairs (D, E) with [x_D, y_D, z_D, 1] M [x_E, y_E, z_E, 1]^T = 0."""

    matrix: np.ndarray
    scale: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).copy()
        if m.shape != (4, 4):
            raise UsageError("bilinear constraint needs a 4x4 matrix")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def evaluate(self, d, e) -> float:
        hd = np.array([*as_point(d), 1.0])
        he = np.array([*as_point(e), 1.0])
        return float(hd @ self.matrix @ he)

    def contract(self, d) -> PlaneConstraint:
        """Fix node D, leaving a plane for E."""
        hd = np.array([*as_point(d), 1.0])
        row = hd @ self.matrix  # coefficients over (x_E, y_E, z_E, 1)
        form = LinearForm3(row[3], row[0], row[1], row[2])
        if np.linalg.norm(form.gradient) <= 1e-12 * max(self.scale, 1.0) ** 3:
            raise DegenerateGeometryError(
                "contracted plane is degenerate for this fixed node")
        return PlaneConstraint(form, self.scale)


@dataclass(frozen=True)
class QuadricConstraint:
    """Positions E with [1, x, y, z] T [1, x, y, z]^T = 0."""

    matrix: np.ndarray
    scale: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).copy()
        if m.shape != (4, 4):
            raise UsageError("quadric constraint needs a 4x4 matrix")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def value(self, p) -> float:
        h = _homrow(p)
        return float(h @ self.matrix @ h)

    def gradient(self, p) -> np.ndarray:
        h = _homrow(p)
        g = (self.matrix + self.matrix.T) @ h
        return g[1:]

    def residual(self, p) -> float:
        """First-order distance: value over gradient magnitude."""
        g = np.linalg.norm(self.gradient(p))
        ref = np.linalg.norm(self.matrix) * max(self.scale, 1.0)
        return self.value(p) / max(g, 1e-12 * ref)

    def normalized_value(self, p) -> float:
        """Value scaled by the matrix norm and the point scale, for audits."""
        h = _homrow(p)
        denom = np.linalg.norm(self.matrix) * float(h @ h)
        return self.value(p) / denom


PlacementConstraint = object  # PlaneConstraint | BilinearConstraint | QuadricConstraint


def constraint_adjacent_shared3(a, b, c, w1: float, w2: float) -> BilinearConstraint:
    """Bilinear locus for new nodes D, E when the removed members share node b.

    Cell (a, b, c, D, E) has stress ratio w_ab / w_bc = w1 / w2 exactly when
    det[[1,a],[1,b],[1,D],[1,E]] - (w2/w1) det[[1,b],[1,c],[1,D],[1,E]] = 0,
    which is bilinear in the homogeneous coordinates of D and E. The matrix
    entries are the 2x2-determinant pairings of the (a, b) rows against the
    (b, c) rows weighted by -w2/w1.
    """
    if w1 == 0:
        raise UsageError("w1 must be nonzero")
    a, b, c = as_point(a), as_point(b), as_point(c)
    if np.linalg.norm(np.cross(b - a, c - a)) <= 1e-12 * cloud_diameter([a, b, c]) ** 2:
        raise DegenerateGeometryError("a, b, c are collinear")
    ratio = w2 / w1
    ha, hb, hc = _homrow(a), _homrow(b), _homrow(c)
    M = np.zeros((4, 4))
    basis = np.eye(4)
    # rows ordered (x, y, z, 1) to match the [x_D, y_D, z_D, 1] convention
    order = [1, 2, 3, 0]
    for i in range(4):
        for j in range(4):
            hd, he = basis[order[i]], basis[order[j]]
            M[i, j] = (_det4([ha, hb, hd, he]) - ratio * _det4([hb, hc, hd, he]))
    return BilinearConstraint(M, cloud_diameter([a, b, c]))


def plane_adjacent_shared4(a, b, c, d, w1: float, w2: float) -> PlaneConstraint:
    """Plane for node E when the removed members share node b and d is fixed."""
    bilinear = constraint_adjacent_shared3(a, b, c, w1, w2)
    plane = bilinear.contract(as_point(d))
    return PlaneConstraint(plane.form, cloud_diameter([a, b, c, d]))


def quadric_nonadjacent_shared4(a, b, c, d, w1: float, w2: float) -> QuadricConstraint:
    """Quadric for node E when removing disjoint members (a,b) and (c,d).

    T_ij pairs the last-row cofactors of the point triples: the (a,b,c) and
    (a,b,d) forms against ratio times the (b,c,d) and (a,c,d) forms. Any E
    on the zero set gives a cell with w_ab / w_cd = w1 / w2.
    """
    if w1 == 0:
        raise UsageError("w1 must be nonzero")
    pts = [as_point(p) for p in (a, b, c, d)]
    dia = cloud_diameter(pts)
    from .geometry import oriented_volume
    if abs(oriented_volume(*pts)) <= 1e-12 * dia ** 3:
        raise DegenerateGeometryError("base nodes a, b, c, d are coplanar")
    a, b, c, d = pts
    l_abc = linear_form(a, b, c).coefficients
    l_abd = linear_form(a, b, d).coefficients
    l_bcd = linear_form(b, c, d).coefficients
    l_acd = linear_form(a, c, d).coefficients
    T = np.outer(l_abc, l_abd) - (w2 / w1) * np.outer(l_bcd, l_acd)
    return QuadricConstraint(T, dia)


# -- deriving targets from a structure ----------------------------------------

@dataclass(frozen=True)
class FusionTarget:
    """Members to remove and the densities the new cell must realize."""

    members: Tuple[Member, ...]
    densities: Tuple[float, ...]  # required values in the new cell


def fusion_target(state: StructureState, remove: Sequence[Member],
                  combination: Sequence[float] | None = None) -> FusionTarget:
    """Required new-cell densities: opposite of the structure's combined stress."""
    if state.dim_w == 0:
        raise UsageError("structure has no self-stress state")
    comb = np.ones(state.dim_w) if combination is None else np.asarray(combination, float)
    w = state.basis @ comb
    members = tuple(member_of(*m) for m in remove)
    dens = []
    for m in members:
        val = w[state.member_index(m)]
        if abs(val) <= 1e-12 * max(np.max(np.abs(w)), 1e-300):
            raise UsageError(
                f"member {m} carries no combined stress; pick another combination")
        dens.append(-float(val))
    return FusionTarget(members, tuple(dens))


def build_fusion_constraint(state: StructureState, remove: Sequence[Member],
                            fix: Optional[str] = None,
                            combination: Sequence[float] | None = None):
    """Constraint surface for the free node of a cell that will fuse `remove`.

    Two members sharing a node give the bilinear case (a plane once `fix`
    names the fourth shared node); two disjoint members give the quadric.
    """
    members = [member_of(*m) for m in remove]
    if len(members) != 2:
        raise UsageError("fusion constraints are defined for two removed members")
    target = fusion_target(state, members, combination)
    (m1, m2) = target.members
    shared = set(m1) & set(m2)
    coords = state.coords()
    # sign convention: required cell density on m1 is -w1, on m2 is -w2
    w1, w2 = -target.densities[0], -target.densities[1]
    if len(shared) == 1:
        bnode = shared.pop()
        anode = next(n for n in m1 if n != bnode)
        cnode = next(n for n in m2 if n != bnode)
        bil = constraint_adjacent_shared3(coords[anode], coords[bnode],
                                          coords[cnode], w1, w2)
        if fix is None:
            return bil
        return bil.contract(state.coord_of(fix))
    if len(shared) == 0:
        a, b = m1
        c, d = m2
        return quadric_nonadjacent_shared4(coords[a], coords[b], coords[c],
                                           coords[d], w1, w2)
    raise UsageError("removed members must be distinct")


# -- solving and sampling ------------------------------------------------------

NEWTON_DAMPING = 0.5
NEWTON_BUDGET = 200


def _scalar_constraints(constraints) -> list:
    out = []
    for c in constraints:
        if isinstance(c, (PlaneConstraint, QuadricConstraint)):
            out.append(c)
        elif isinstance(c, BilinearConstraint):
            raise UsageError(
                "bilinear constraints must be contracted on a fixed node first")
        else:
            raise UsageError(f"unknown constraint type {type(c).__name__}")
    return out


def solve_on_constraints(constraints: Sequence, guess,
                         tol: float = 1e-10) -> np.ndarray:
    """Damped Newton root of the stacked constraint residuals.

    Converged when every length-normalized residual is at most
    tol * constraint scale. Raises NoSolutionFoundError with the best
    residuals otherwise.
    """
    cs = _scalar_constraints(constraints)
    if not 1 <= len(cs) <= 3:
        raise UsageError("expected between one and three constraints")
    x = as_point(guess).astype(float)
    scale = max(max(c.scale for c in cs), 1e-12)
    best = None
    for _ in range(NEWTON_BUDGET):
        r = np.array([c.residual(x) for c in cs])
        if best is None or np.max(np.abs(r)) < best[0]:
            best = (float(np.max(np.abs(r))), x.copy(), r.copy())
        if np.all(np.abs(r) <= tol * scale):
            return x
        J = np.zeros((len(cs), 3))
        for i, c in enumerate(cs):
            g = c.gradient(x)
            gn = np.linalg.norm(g)
            if isinstance(c, PlaneConstraint):
                J[i] = g / gn
            else:
                # residual = value/|grad|; use the dominant value term
                J[i] = g / max(gn, 1e-300)
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        x = x - NEWTON_DAMPING * step
    raise NoSolutionFoundError(
        f"no intersection found within {NEWTON_BUDGET} iterations "
        f"(best residual {best[0]:.3e})", residuals=tuple(best[2]))


def sample_surface(constraint, count: int, region,
                   seed: int | None = 0) -> List[np.ndarray]:
    """Up to count points of the surface inside an axis-aligned region.

    region is ((xmin, ymin, zmin), (xmax, ymax, zmax)). Points satisfy the
    constraint to 1e-9 * scale. An empty list means the surface misses the
    region; that is not an error.
    """
    if count < 1:
        raise UsageError("count must be at least 1")
    lo = as_point(region[0])
    hi = as_point(region[1])
    if np.any(hi <= lo):
        raise UsageError("region must have positive extent")
    if isinstance(constraint, BilinearConstraint):
        raise UsageError("bilinear constraints must be contracted before sampling")
    rng = np.random.default_rng(seed)
    out: List[np.ndarray] = []
    tol = 1e-9 * max(constraint.scale, 1e-12)

    if isinstance(constraint, PlaneConstraint):
        g = constraint.form.gradient
        gn = np.linalg.norm(g)
        if gn == 0:
            return []
        n = g / gn
        for _ in range(count * 40):
            if len(out) >= count:
                break
            p = lo + rng.random(3) * (hi - lo)
            q = p - (constraint.form(p) / gn) * n
            if np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12) \
                    and abs(constraint.residual(q)) <= tol:
                out.append(q)
        return out

    if isinstance(constraint, QuadricConstraint):
        # shoot axis-parallel lines through the box and keep quadratic roots
        T = constraint.matrix
        S = T + T.T
        attempts = 0
        while len(out) < count and attempts < count * 60:
            attempts += 1
            axis = attempts % 3
            p = lo + rng.random(3) * (hi - lo)
            h0 = np.array([1.0, p[0], p[1], p[2]])
            h0[1 + axis] = 0.0
            e = np.zeros(4)
            e[1 + axis] = 1.0
            a2 = float(e @ T @ e)
            b1 = float(h0 @ S @ e)
            c0 = float(h0 @ T @ h0)
            roots = []
            if abs(a2) > 1e-14 * np.linalg.norm(T):
                disc = b1 * b1 - 4 * a2 * c0
                if disc >= 0:
                    roots = [(-b1 + np.sqrt(disc)) / (2 * a2),
                             (-b1 - np.sqrt(disc)) / (2 * a2)]
            elif abs(b1) > 1e-14 * np.linalg.norm(T):
                roots = [-c0 / b1]
            for t in roots:
                if len(out) >= count:
                    break
                q = p.copy()
                q[axis] = t
                if np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12) \
                        and abs(constraint.residual(q)) <= tol:
                    out.append(q)
        return out

    raise UsageError(f"unknown constraint type {type(constraint).__name__}")
