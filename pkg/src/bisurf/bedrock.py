"""Bedrock surface from exposed-bedrock data and the soil layer above it.

On exposed cells the terrain is the bedrock.  Terrain values at exposed
nodes next to the exposure boundary (and on the rectangle edge) are the
curve data of the boundary reconstruction; the reconstructed bedrock is then
subtracted from the terrain to give the soil thickness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assembly import BoundaryData, SurfaceField, assemble_constant_load, assemble_operator
from .geodata import Raster, field_from_raster, grid_from_raster, mask_from_raster
from .grid import MaskedGrid, Polyline, extract_inner_curves, rasterize_polygon, sample_curve_points
from .inverse import MIN_SEPARATION, CurveDatum, Reconstruction, reconstruct_boundary

SAMPLES_PER_CELL = 2.0
# overshoot below this fraction of the terrain magnitude is roundoff, not clamping
CLAMP_RTOL = 1e-9


@dataclass(frozen=True)
class BedrockResult:
    """Reconstructed bedrock and soil with run diagnostics.

    ``clamped_cells`` counts covered cells where the bedrock came out above
    the terrain by more than roundoff and the soil was clamped to zero; ``max_overshoot`` is the
    largest such excess (0 if none).  On exposed cells ``bedrock`` is the
    terrain; the raw reconstruction, detrended, is
    ``reconstruction.surface``.  ``boundary`` is the recovered
    boundary data of the bedrock itself, with the trend plane restored.
    """

    bedrock: SurfaceField = field(repr=False)
    soil: SurfaceField = field(repr=False)
    exposed: np.ndarray = field(repr=False)
    curves: tuple = field(repr=False)
    data_nodes: np.ndarray = field(repr=False)
    trend: np.ndarray
    reconstruction: Reconstruction = field(repr=False)
    boundary: BoundaryData = field(repr=False)
    clamped_cells: int
    max_overshoot: float


def exposed_mask(grid: MaskedGrid, exposed) -> tuple[np.ndarray, list[Polyline]]:
    """Node mask and curves from a mask raster/array or a list of closed polygons."""
    if isinstance(exposed, (list, tuple)):
        mask = np.zeros(grid.shape, dtype=bool)
        for n, poly in enumerate(exposed):
            if not poly.closed:
                raise ValueError(f"exposed-region polyline {n} is not closed")
            mask |= rasterize_polygon(grid, poly)
        return mask, list(exposed)
    if isinstance(exposed, Raster):
        mask = mask_from_raster(exposed)
    else:
        mask = np.asarray(exposed, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError(f"exposed mask shape {mask.shape} does not match grid {grid.shape}")
    return mask, extract_inner_curves(grid, mask.astype(float))


def curve_data_nodes(grid: MaskedGrid, mask: np.ndarray, curves: Sequence[Polyline],
                     samples_per_cell: float = SAMPLES_PER_CELL) -> np.ndarray:
    """Exposed nodes along the exposure boundary, plus exposed edge nodes.

    Each curve gets ``ceil(samples_per_cell * length / h)`` points, each
    snapped to its nearest exposed node.  Exposed nodes with a covered
    8-neighbour are added too, since snapping can skip the nodes where a
    contour cuts a cell corner.  Returned in ascending flat order.
    """
    if not mask.any():
        return np.zeros(0, dtype=int)
    X, Y = grid.coordinates()
    ex = np.flatnonzero(mask.ravel())
    exy = np.column_stack([X.ravel()[ex], Y.ravel()[ex]])
    nodes = set()
    for cv in curves:
        n = max(1, int(np.ceil(samples_per_cell * cv.length / grid.spacing)))
        for p in sample_curve_points(cv, n):
            nodes.add(int(ex[np.argmin(np.hypot(exy[:, 0] - p[0], exy[:, 1] - p[1]))]))
    rim = np.zeros(grid.shape, dtype=bool)
    rim[0, :] = rim[-1, :] = rim[:, 0] = rim[:, -1] = True
    covered = np.pad(~mask, 1, constant_values=False)
    near = np.zeros(grid.shape, dtype=bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            near |= covered[1 + dj:1 + dj + grid.nrows, 1 + di:1 + di + grid.ncols]
    nodes.update(int(k) for k in np.flatnonzero(((rim | near) & mask).ravel()))
    return np.array(sorted(nodes), dtype=int)


def fit_plane(xy: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Least-squares ``(a, b, c)`` of ``z = a + b x + c y``."""
    M = np.column_stack([np.ones(len(z)), xy])
    return np.linalg.lstsq(M, z, rcond=None)[0]


def reconstruct_bedrock(
    terrain: Raster,
    exposed,
    samples_per_cell: float = SAMPLES_PER_CELL,
    scale: float | None = None,
    k: int | None = None,
    detrend: bool = True,
    min_separation: float = MIN_SEPARATION,
) -> BedrockResult:
    """Reconstruct the bedrock under ``terrain`` on a grid clamped on every edge.

    Parameters
    ----------
    terrain : Raster
        Terrain elevation; cell centres are the grid nodes.
    exposed : Raster, ndarray or list of Polyline
        Exposed-bedrock indicator raster, node mask, or closed polygons.
    samples_per_cell : float
        Curve sampling density per grid spacing.
    scale, k, min_separation
        Passed to :func:`bisurf.inverse.reconstruct_boundary`.
    detrend : bool
        Fit a plane to the data, reconstruct the remainder and add the
        plane back.  Planes are exact discrete biharmonic fields, so this
        only moves the minimum-norm reference of the truncated solve.
    """
    grid = grid_from_raster(terrain)
    op = assemble_operator(grid)
    terr = field_from_raster(terrain, grid)
    if np.isnan(terr.values).any():
        raise ValueError("terrain raster contains NODATA cells")
    mask, curves = exposed_mask(grid, exposed)
    nodes = curve_data_nodes(grid, mask, curves, samples_per_cell)
    if len(nodes) < 3:
        raise ValueError(f"only {len(nodes)} exposed data nodes")
    X, Y = grid.coordinates()
    xy = np.column_stack([X.ravel()[nodes], Y.ravel()[nodes]])
    z = terr.values.ravel()[nodes]
    trend = fit_plane(xy, z) if detrend else np.zeros(3)
    plane = trend[0] + trend[1] * X + trend[2] * Y
    data = [CurveDatum((float(p[0]), float(p[1])), float(v - plane.ravel()[n]))
            for p, v, n in zip(xy, z, nodes)]
    rhs = assemble_constant_load(grid, 0.0)
    rec = reconstruct_boundary(op, rhs, data, k=k, scale=scale, min_separation=min_separation)
    bed = rec.surface.values + plane
    raw = terr.values - bed
    covered = ~mask
    over = covered & (raw < -CLAMP_RTOL * np.abs(terr.values).max())
    soil = np.where(covered, np.maximum(raw, 0.0), 0.0)
    a, bx, by = trend
    tb = BoundaryData.from_functions(op, lambda x, y: a + bx * x + by * y, lambda x, y: (bx, by))
    boundary = BoundaryData({n: v + tb.f[n] for n, v in rec.boundary.f.items()},
                            {n: v + tb.h[n] for n, v in rec.boundary.h.items()})
    return BedrockResult(
        bedrock=SurfaceField(grid, np.where(mask, terr.values, bed)),
        soil=SurfaceField(grid, soil),
        exposed=mask,
        curves=tuple(curves),
        data_nodes=nodes,
        trend=trend,
        reconstruction=rec,
        boundary=boundary,
        clamped_cells=int(over.sum()),
        max_overshoot=float(-raw[over].min()) if over.any() else 0.0,
    )
