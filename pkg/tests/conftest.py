import itertools
import math

import numpy as np
import pytest

from tensecell.cell import CellSpec


def random_gp_points(rng, n=5, scale=1.0, tries=200):
    """Random points with every quadruple of any five non-coplanar."""
    for _ in range(tries):
        pts = rng.normal(size=(n, 3)) * scale
        if n < 5:
            return pts
        ok = True
        for quad in itertools.combinations(range(n), 4):
            sub = pts[list(quad)]
            pad = np.hstack([np.ones((4, 1)), sub])
            if abs(np.linalg.det(pad)) < 1e-3:
                ok = False
                break
        if ok:
            return pts
    raise RuntimeError("could not draw points in general position")


def random_cell(rng, names=("a", "b", "c", "d", "e"), scale=1.0) -> CellSpec:
    pts = random_gp_points(rng, 5, scale)
    return CellSpec(nodes=tuple(names), coords=tuple(pts),
                    anchor=(names[0], names[1]), anchor_value=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def prism_coords(r=1.0, h=1.0, twist=math.pi / 6):
    out = {}
    for k, a in zip("ABC", [0.0, 2 * math.pi / 3, 4 * math.pi / 3]):
        out[k] = (r * math.cos(a), r * math.sin(a), 0.0)
    for k, a in zip("DEF", [0.0, 2 * math.pi / 3, 4 * math.pi / 3]):
        out[k] = (r * math.cos(a + twist), r * math.sin(a + twist), h)
    return out


CHAIN_COORDS = {
    "1": (0.0, 0.0, 0.0), "2": (1.0, 0.0, 0.0), "3": (0.5, 0.9, 0.0),
    "4": (-0.3, 1.0, 0.5), "5": (0.5, 0.3, 1.0),
    "6": (1.2, 0.6, 0.6), "7": (1.2, 0.6, -0.6),
}
