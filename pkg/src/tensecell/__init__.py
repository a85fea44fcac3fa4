"""tensecell: tensegrity morphogenesis by cell adhesion and fusion.

Build three-dimensional tensegrity structures from five-node complete-graph
cells, maintain an explicit self-stress basis through adhesion and fusion
steps, and compute the constraint surfaces that make member removal
feasible.
"""

from .cell import (CellKind, CellSpec, CellStress, cell_equilibrium_residual,
                   cell_self_stress, classify_cell)
from .engine import (AdhereStep, ExpectStep, FuseStep, OrientStep, PlaceStep,
                     SeedStep, StepLog, adhere, expected_delta_dim,
                     find_virtual_cells, fuse, run_script, seed)
from .errors import TensecellError
from .geometry import (LinearForm3, general_position, linear_form,
                       oriented_volume, point3)
from .placement import (BilinearConstraint, PlaneConstraint, QuadricConstraint,
                        build_fusion_constraint, constraint_adjacent_shared3,
                        plane_adjacent_shared4, quadric_nonadjacent_shared4,
                        sample_surface, solve_on_constraints)
from .structure import (CountReport, MorphoCell, MorphoGraph, StructureState,
                        assemble_equilibrium_matrix, count_report, make_state,
                        nullspace_basis, typology_from_stress)

__version__ = "0.1.0"

__all__ = [
    "AdhereStep", "BilinearConstraint", "CellKind", "CellSpec", "CellStress",
    "CountReport", "ExpectStep", "FuseStep", "LinearForm3", "MorphoCell",
    "MorphoGraph", "OrientStep", "PlaceStep", "PlaneConstraint",
    "QuadricConstraint", "SeedStep", "StepLog", "StructureState",
    "TensecellError", "adhere", "assemble_equilibrium_matrix",
    "build_fusion_constraint", "cell_equilibrium_residual", "cell_self_stress",
    "classify_cell", "constraint_adjacent_shared3", "count_report",
    "expected_delta_dim", "find_virtual_cells", "fuse", "general_position",
    "linear_form", "make_state", "nullspace_basis", "oriented_volume",
    "plane_adjacent_shared4", "point3", "quadric_nonadjacent_shared4",
    "run_script", "sample_surface", "seed", "solve_on_constraints",
    "typology_from_stress",
]
