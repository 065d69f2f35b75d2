"""Seeded synthetic inputs for the load-fit and bedrock workflows.

Both fixtures are consistent by construction: the wells are generated from a
surface with weights inside the default bounds, and the terrain is a
discrete biharmonic bedrock plus a nonnegative soil layer that vanishes on
the exposed cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    BoundaryData,
    SurfaceField,
    assemble_constant_load,
    assemble_operator,
    evaluate_at,
    solve_forward,
)
from .geodata import Raster, raster_from_field
from .grid import Polyline, build_grid, square_curve
from .loadfit import (
    EQ_BOUNDS,
    GE_BOUNDS,
    SIGMA,
    WellKind,
    WellRecord,
    basis_responses,
    compose_surface,
    loads_at_wells,
)

WELL_RECT = (0.0, 0.0, 24.0, 16.0)
WELL_NX = 48
WELL_CUTOUT = square_curve((17.0, 11.0), 1.5)
N_WELLS = 20
N_EQUALITY = 3

TERRAIN_SHAPE = (25, 33)  # rows, cols
TERRAIN_CELL = 1.0
TERRAIN_ORIGIN = (1000.0, 2000.0)
TERRAIN_DECIMALS = 2


@dataclass(frozen=True)
class WellFixture:
    rect: tuple
    n_x: int
    cutouts: tuple
    wells: tuple
    true_weights: np.ndarray = field(repr=False)


def _draw_sites(rng, n, rect, margin, min_sep, cutout: Polyline, cut_margin):
    x0, y0, x1, y1 = rect
    lo = cutout.vertices.min(axis=0) - cut_margin
    hi = cutout.vertices.max(axis=0) + cut_margin
    sites = []
    while len(sites) < n:
        p = rng.uniform((x0 + margin, y0 + margin), (x1 - margin, y1 - margin))
        if np.all(p > lo) and np.all(p < hi):
            continue
        if any(np.hypot(*(p - q)) < min_sep for q in sites):
            continue
        sites.append(p)
    return np.array(sites)


def well_fixture(seed: int = 0) -> WellFixture:
    """Twenty wells, the first three drilled to bedrock, over a clamped rectangle with a cutout.

    Depths come from a surface whose load weights lie strictly inside the
    default bounds; inequality depths sit below that surface.
    """
    rng = np.random.default_rng(seed)
    grid = build_grid(WELL_RECT, WELL_NX, [WELL_CUTOUT], dirichlet="all")
    op = assemble_operator(grid)
    sites = _draw_sites(rng, N_WELLS, WELL_RECT, 2.5, 2.0, WELL_CUTOUT, 1.0)
    kinds = [WellKind.EQUALITY] * N_EQUALITY + [WellKind.INEQUALITY] * (N_WELLS - N_EQUALITY)
    provisional = [WellRecord(tuple(s), 0.0, k) for s, k in zip(sites, kinds)]
    loads = loads_at_wells(provisional, SIGMA, EQ_BOUNDS, GE_BOUNDS)
    p_true = np.concatenate([
        rng.uniform(0.5, 1.5, N_EQUALITY),
        rng.uniform(0.1, 0.6, N_WELLS - N_EQUALITY),
    ])
    surf = compose_surface(p_true, basis_responses(op, loads))
    wells = []
    for s, k in zip(sites, kinds):
        u = evaluate_at(surf, s)
        if u <= 0:
            raise RuntimeError("fixture surface is not positive at a well")
        depth = u if k is WellKind.EQUALITY else u * rng.uniform(0.6, 0.95)
        wells.append(WellRecord((float(s[0]), float(s[1])), float(depth), k))
    return WellFixture(WELL_RECT, WELL_NX, (WELL_CUTOUT,), tuple(wells), p_true)


@dataclass(frozen=True)
class BedrockFixture:
    terrain: Raster
    exposed: Raster
    bedrock: Raster
    soil: Raster


def _bedrock_surface(x, y, c):
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


def bedrock_fixture(seed: int = 0) -> BedrockFixture:
    """Terrain and exposed-region rasters over a clamped rectangle.

    The bedrock is the discrete forward solution with zero load and boundary
    data from a random quadratic plus a smooth wave.  Bedrock is exposed in
    a rim of varying width along the rectangle edges and on two small
    islands; the soil is zero there and about one unit thick or more
    elsewhere.  Terrain values are rounded to ``TERRAIN_DECIMALS`` places.
    """
    rng = np.random.default_rng(seed)
    nrows, ncols = TERRAIN_SHAPE
    h = TERRAIN_CELL
    x0, y0 = TERRAIN_ORIGIN
    rect = (x0, y0, x0 + (ncols - 1) * h, y0 + (nrows - 1) * h)
    grid = build_grid(rect, ncols - 1, dirichlet="all")
    op = assemble_operator(grid)
    L = (ncols - 1) * h
    cx, cy = 0.5 * (rect[0] + rect[2]), 0.5 * (rect[1] + rect[3])
    c = np.array([
        rng.uniform(80.0, 120.0),
        rng.uniform(-0.2, 0.2),
        rng.uniform(-0.2, 0.2),
        rng.uniform(-1.0, 1.0) / L,
        rng.uniform(-1.0, 1.0) / L,
        rng.uniform(-1.0, 1.0) / L,
    ])

    amp, kx, ky = rng.uniform(1.0, 2.0), np.pi / L, 1.5 * np.pi / L

    def g(x, y):
        u, v = x - cx, y - cy
        return _bedrock_surface(u, v, c) + amp * np.sin(kx * u) * np.cos(ky * v)

    def grad(x, y):
        u, v = x - cx, y - cy
        return (c[1] + 2 * c[3] * u + c[4] * v + amp * kx * np.cos(kx * u) * np.cos(ky * v),
                c[2] + c[4] * u + 2 * c[5] * v - amp * ky * np.sin(kx * u) * np.sin(ky * v))

    bc = BoundaryData.from_functions(op, g, grad)
    bedrock = solve_forward(op, assemble_constant_load(grid, 0.0), bc)

    X, Y = grid.coordinates()
    # exposed rim of varying width around a soil-filled basin, plus two islands
    edge_dist = np.minimum.reduce([X - rect[0], rect[2] - X, Y - rect[1], rect[3] - Y])
    theta = np.arctan2(Y - cy, X - cx)
    phase = rng.uniform(0.0, 2 * np.pi, 2)
    width = h * (3.0 + 0.8 * np.sin(3 * theta + phase[0]) + 0.6 * np.cos(5 * theta + phase[1]))
    exposed = edge_dist <= width
    for _ in range(2):
        ax = rng.uniform(cx - 0.25 * L, cx + 0.25 * L)
        ay = rng.uniform(cy - 0.15 * L, cy + 0.15 * L)
        exposed |= np.hypot(X - ax, Y - ay) <= rng.uniform(1.5, 2.5) * h
    thickness = 1.0 + 2.0 * rng.uniform(0.0, 1.0) * (1.0 + np.sin(X / (0.3 * L)) * np.cos(Y / (0.25 * L)))
    # elevation rasters carry finite precision; the rounding is also the
    # noise floor that gives the L-curve its corner
    bed = bedrock.values
    terrain_vals = np.round(bed + np.where(exposed, 0.0, thickness), TERRAIN_DECIMALS)
    soil_vals = np.where(exposed, 0.0, terrain_vals - bed)

    def to_raster(v):
        return raster_from_field(SurfaceField(grid, v))

    return BedrockFixture(
        terrain=to_raster(terrain_vals),
        exposed=to_raster(exposed.astype(float)),
        bedrock=to_raster(terrain_vals - soil_vals),
        soil=to_raster(soil_vals),
    )
