"""Shifted-boundary Poisson solver with a shy-patch multigrid preconditioner."""

from .assembly import SbmSystem, assemble, extension_row, shift_statistics
from .fem import DofHandler, Element, QuadratureRule, locate_reference_point, shape_gradients, shape_values
from .geometry import (
    GeometryKind,
    LevelSetGeometry,
    ProjectionError,
    ShiftDatum,
    circle,
    closest_point_projection,
    normalized_signed_shift,
    unit_circle,
    volume_fraction_inside,
)
from .harness import CSV_HEADER, ExperimentRecord, SolverConfig, run, sweep, verify_convergence
from .linalg import DenseFactor, SparseMatrix, coarse_factorize, gmres, spmv
from .mesh import MeshLevel, SurrogateFace, classify_cells, extract_surrogate_boundary, vertex_active_cell_count
from .multigrid import (
    MgHierarchy,
    VCycleConfig,
    build_h_hierarchy,
    build_h_prolongation,
    build_p_hierarchy,
    build_p_prolongation,
    restrict,
    v_cycle,
)
from .smoother import Patch, PatchSet, SmootherConfig, boundary_patch_fraction, build_patches, smooth

__all__ = [
    "CSV_HEADER",
    "DenseFactor",
    "DofHandler",
    "Element",
    "ExperimentRecord",
    "GeometryKind",
    "LevelSetGeometry",
    "MeshLevel",
    "MgHierarchy",
    "Patch",
    "PatchSet",
    "ProjectionError",
    "QuadratureRule",
    "SbmSystem",
    "ShiftDatum",
    "SmootherConfig",
    "SolverConfig",
    "SparseMatrix",
    "SurrogateFace",
    "VCycleConfig",
    "assemble",
    "boundary_patch_fraction",
    "build_h_hierarchy",
    "build_h_prolongation",
    "build_p_hierarchy",
    "build_p_prolongation",
    "build_patches",
    "circle",
    "classify_cells",
    "closest_point_projection",
    "coarse_factorize",
    "extension_row",
    "extract_surrogate_boundary",
    "gmres",
    "locate_reference_point",
    "normalized_signed_shift",
    "restrict",
    "run",
    "shape_gradients",
    "shape_values",
    "shift_statistics",
    "smooth",
    "spmv",
    "sweep",
    "unit_circle",
    "v_cycle",
    "verify_convergence",
    "vertex_active_cell_count",
    "volume_fraction_inside",
]
