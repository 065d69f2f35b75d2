"""Smooth surfaces over masked 2D grids from a discrete biharmonic equation.

Forward solves with clamped or natural boundaries, Gaussian-bump load
fitting against equality and inequality point data, and recovery of
missing boundary data from interior-curve data by truncated SVD.
"""

from .assembly import (
    BiharmonicOperator,
    BoundaryData,
    GaussianLoad,
    SurfaceField,
    assemble_constant_load,
    assemble_function_load,
    assemble_gaussian_load,
    assemble_operator,
    evaluate_at,
    solve_forward,
)
from .bedrock import BedrockResult, reconstruct_bedrock
from .errors import (
    BisurfError,
    ForwardProblemError,
    FormatError,
    GridError,
    InfeasibleError,
    LCurveError,
    OutsideDomainError,
)
from .grid import MaskedGrid, Polyline, Tag, build_grid, extract_inner_curves, validate_grid
from .inverse import (
    CurveDatum,
    assemble_block_system,
    lcurve_corner,
    norms_curve,
    reconstruct_boundary,
    tsvd_solve,
)
from .loadfit import FitResult, WellKind, WellRecord, fit_load, fit_weights

__version__ = "0.1.0"

__all__ = [
    "BedrockResult", "BiharmonicOperator", "BisurfError", "BoundaryData", "CurveDatum",
    "FitResult", "FormatError", "ForwardProblemError", "GaussianLoad", "GridError",
    "InfeasibleError", "LCurveError", "MaskedGrid", "OutsideDomainError", "Polyline",
    "SurfaceField", "Tag", "WellKind", "WellRecord", "assemble_block_system",
    "assemble_constant_load", "assemble_function_load", "assemble_gaussian_load",
    "assemble_operator", "build_grid", "evaluate_at", "extract_inner_curves", "fit_load",
    "fit_weights", "lcurve_corner", "norms_curve", "reconstruct_bedrock",
    "reconstruct_boundary", "solve_forward", "tsvd_solve", "validate_grid",
]
