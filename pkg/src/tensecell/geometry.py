"""Geometric primitives: oriented volumes, determinant linear forms, position tests.

Everything here is pure binary64 arithmetic. Degeneracy decisions are made
with tolerances relative to the point-cloud scale, never exactly.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import UsageError

Point3 = np.ndarray

#: Relative coplanarity tolerance; the effective threshold is this times
#: the cube of the point-cloud diameter.
DEFAULT_GP_TOL = 1e-9


def point3(x, y, z) -> Point3:
    """Build a 3-vector, validating that all coordinates are finite."""
    p = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(p)):
        raise UsageError(f"non-finite coordinates: {(x, y, z)}")
    return p


def as_point(p) -> Point3:
    if isinstance(p, np.ndarray) and p.shape == (3,) and p.dtype == float:
        return p
    seq = tuple(p)
    if len(seq) != 3:
        raise UsageError(f"expected 3 coordinates, got {len(seq)}")
    return point3(*seq)


def oriented_volume(a, b, c, d) -> float:
    """Signed volume of tetrahedron abcd: (1/6) det [[1,a],[1,b],[1,c],[1,d]].

    Antisymmetric under swapping any two arguments; zero iff the four
    points are coplanar.
    """
    a, b, c, d = as_point(a), as_point(b), as_point(c), as_point(d)
    m = np.empty((3, 3))
    m[0] = b - a
    m[1] = c - a
    m[2] = d - a
    return float(np.linalg.det(m)) / 6.0


@dataclass(frozen=True)
class LinearForm3:
    """Affine form c0 + c1*x + c2*y + c3*z."""

    c0: float
    c1: float
    c2: float
    c3: float

    def __call__(self, p) -> float:
        p = as_point(p)
        return self.c0 + self.c1 * p[0] + self.c2 * p[1] + self.c3 * p[2]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3])

    @property
    def gradient(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3])


def linear_form(a, b, c) -> LinearForm3:
    """Form L with L(d) = 6 * oriented_volume(a, b, c, d) for every d.

    The coefficients are the last-row cofactors of the 4x4 homogeneous
    determinant. For collinear a, b, c the form degenerates toward all-zero
    coefficients; a warning is emitted and the coefficients are returned
    as computed, since callers that only evaluate can still do so safely.
    """
    a, b, c = as_point(a), as_point(b), as_point(c)
    rows = np.array([np.concatenate(([1.0], a)),
                     np.concatenate(([1.0], b)),
                     np.concatenate(([1.0], c))])
    coeffs = []
    for j in range(4):
        minor = np.delete(rows, j, axis=1)
        coeffs.append((-1.0) ** (3 + j) * float(np.linalg.det(minor)))
    form = LinearForm3(*coeffs)
    scale = cloud_diameter([a, b, c]) ** 2
    if np.linalg.norm(form.gradient) <= 1e-12 * max(scale, 1e-300):
        warnings.warn("linear_form of (near-)collinear points is degenerate",
                      stacklevel=2)
    return form


class GeneralPosition(NamedTuple):
    ok: bool
    offending: tuple | None  # indices of the first near-coplanar quadruple


def cloud_diameter(points: Iterable) -> float:
    pts = [as_point(p) for p in points]
    if len(pts) < 2:
        return 0.0
    return max(float(np.linalg.norm(p - q)) for p, q in itertools.combinations(pts, 2))


def general_position(points: Sequence, tol: float = DEFAULT_GP_TOL) -> GeneralPosition:
    """Test that no four of five points are coplanar.

    The coplanarity threshold is tol * diameter**3, so the test is
    invariant under rigid motions and uniform scaling.
    """
    pts = [as_point(p) for p in points]
    if len(pts) != 5:
        raise UsageError(f"general_position expects exactly 5 points, got {len(pts)}")
    threshold = tol * cloud_diameter(pts) ** 3
    for quad in itertools.combinations(range(5), 4):
        v = oriented_volume(*(pts[i] for i in quad))
        if abs(v) <= threshold:
            return GeneralPosition(False, quad)
    return GeneralPosition(True, None)
