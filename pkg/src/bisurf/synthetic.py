"""Synthetic inner-square reconstruction problem and its parameter sweeps.

A clamped plate on ``[0, 2]^2`` under the constant load ``q = 0.1`` with
homogeneous boundary data gives the reference field.  Its values on a square
of half side ``r`` centred in the domain, together with zero normal
derivatives on the outer boundary, are the data from which the boundary
values are reconstructed.  The exact answer is zero boundary data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assembly import (
    BiharmonicOperator,
    SurfaceField,
    assemble_constant_load,
    assemble_operator,
    evaluate_at,
    solve_forward,
)
from .grid import build_grid, sample_curve_points, square_curve
from .inverse import (
    BlockSystem,
    CurveDatum,
    assemble_block_system,
    boundary_derivative_data,
)

RECT = (0.0, 0.0, 2.0, 2.0)
LOAD = 0.1
CENTER = (1.0, 1.0)


@dataclass(frozen=True)
class SyntheticProblem:
    r: float
    n_x: int
    op: BiharmonicOperator = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    reference: SurfaceField = field(repr=False)
    points: np.ndarray = field(repr=False)
    data: tuple = field(repr=False)
    system: BlockSystem = field(repr=False)


def square_point_count(op: BiharmonicOperator) -> int:
    """Number of value data making the block system square."""
    return op.n_cols - op.n_rows - len(op.derivative_dofs)


def synthetic_problem(
    r: float,
    n_x: int = 8,
    n_points: int | None = None,
    q: float = LOAD,
    scale: float | None = None,
) -> SyntheticProblem:
    """Build the inner-square problem with half side ``r``.

    ``n_points`` defaults to the count that makes the system square (32 at
    ``n_x = 8``).
    """
    grid = build_grid(RECT, n_x, dirichlet="all")
    op = assemble_operator(grid)
    rhs = assemble_constant_load(grid, q)
    ref = solve_forward(op, rhs)
    n = square_point_count(op) if n_points is None else int(n_points)
    pts = sample_curve_points(square_curve(CENTER, r), n)
    data = [CurveDatum((float(x), float(y)), evaluate_at(ref, (x, y))) for x, y in pts]
    data += boundary_derivative_data(op)
    system = assemble_block_system(op, data, rhs, scale)
    return SyntheticProblem(float(r), int(n_x), op, rhs, ref, pts, tuple(data), system)


def add_relative_noise(b: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """``b`` plus a Gaussian perturbation of norm exactly ``level * ||b||``."""
    b = np.asarray(b, dtype=float)
    e = rng.standard_normal(b.shape)
    return b + level * np.linalg.norm(b) * e / np.linalg.norm(e)


def condition_sweep(radii: Sequence[float], n_xs: Sequence[int], scale_factor: float = 1.0):
    """Condition numbers and spectra over the ``(r, n_x)`` grid.

    Returns a dict mapping ``(r, n_x)`` to the singular values.  The row
    scale is ``scale_factor * h**4``.
    """
    out = {}
    for n_x in n_xs:
        h = (RECT[2] - RECT[0]) / n_x
        for r in radii:
            prob = synthetic_problem(r, n_x, scale=scale_factor * h ** 4)
            out[(float(r), int(n_x))] = np.linalg.svd(prob.system.A, compute_uv=False)
    return out
