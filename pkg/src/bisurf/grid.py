"""Masked structured grids, polylines and contour extraction.

Nodes sit at ``(x0 + i*h, y0 + j*h)`` for ``i = 0..ncols-1`` and
``j = 0..nrows-1``.  Node arrays are indexed ``[j, i]`` (row 0 is the southern
edge) and flattened row-major, so the flat index of node ``(j, i)`` is
``j * ncols + i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import GridError, OutsideDomainError

EDGES = ("left", "right", "bottom", "top")

# unit steps (di, dj) in grid index space
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class Tag(enum.IntEnum):
    OUTSIDE = 0
    INTERIOR = 1
    CLAMPED = 2
    NATURAL = 3


@dataclass(frozen=True)
class Polyline:
    """Ordered vertex list in map units, optionally closed.

    A closed polyline does not repeat its first vertex; a trailing duplicate
    is dropped on construction.
    """

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        if self.closed and len(v) > 2 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 2:
            raise GridError("polyline needs at least 2 vertices")
        if np.any(np.all(np.diff(v, axis=0) == 0.0, axis=1)):
            raise GridError("polyline has repeated consecutive vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Return segment start and end points, including the closing one."""
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self) -> float:
        a, b = self.segments()
        return float(np.hypot(*(b - a).T).sum())


def square_curve(center: Sequence[float], half_side: float) -> Polyline:
    """Closed axis-aligned square, counter-clockwise from the lower-left corner."""
    cx, cy = center
    r = half_side
    return Polyline(
        [(cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r)],
        closed=True,
    )


def points_in_polygon(points: np.ndarray, poly: Polyline) -> np.ndarray:
    """Even-odd ray casting test for a closed polyline."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    px, py = pts[:, 0:1], pts[:, 1:2]
    a, b = poly.segments()
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (py - ay) * (bx - ax) / (by - ay)
    hits = straddle & (px < xcross)
    return (hits.sum(axis=1) % 2) == 1


def distance_to_polyline(points: np.ndarray, poly: Polyline) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    a, b = poly.segments()
    d = b - a
    ap = pts[:, None, :] - a[None, :, :]
    dd = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("nij,ij->ni", ap, d) / dd, 0.0, 1.0)
    closest = a[None] + t[..., None] * d[None]
    return np.min(np.linalg.norm(pts[:, None, :] - closest, axis=2), axis=1)


@dataclass(frozen=True)
class MaskedGrid:
    """Uniform rectangular node grid with per-node boundary tags."""

    origin: tuple[float, float]
    spacing: float
    ncols: int
    nrows: int
    tags: np.ndarray = field(repr=False)

    def __post_init__(self):
        tags = np.array(self.tags, dtype=np.int8)
        if tags.shape != (self.nrows, self.ncols):
            raise GridError(f"tag array shape {tags.shape} != {(self.nrows, self.ncols)}")
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        tags.setflags(write=False)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def size(self) -> int:
        return self.nrows * self.ncols

    @property
    def inside(self) -> np.ndarray:
        return self.tags != Tag.OUTSIDE

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        h = self.spacing
        return (x0, y0, x0 + (self.ncols - 1) * h, y0 + (self.nrows - 1) * h)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays ``(X, Y)`` of shape ``(nrows, ncols)``."""
        x0, y0 = self.origin
        h = self.spacing
        x = x0 + h * np.arange(self.ncols)
        y = y0 + h * np.arange(self.nrows)
        return np.meshgrid(x, y)

    def node_xy(self, k: int) -> np.ndarray:
        j, i = divmod(int(k), self.ncols)
        return np.array([self.origin[0] + i * self.spacing, self.origin[1] + j * self.spacing])

    def flat(self, j: int, i: int) -> int:
        return j * self.ncols + i

    def tag_at(self, j: int, i: int) -> Tag:
        if 0 <= j < self.nrows and 0 <= i < self.ncols:
            return Tag(int(self.tags[j, i]))
        return Tag.OUTSIDE

    def nodes_with(self, tag: Tag) -> np.ndarray:
        """Flat indices of nodes carrying ``tag``, ascending."""
        return np.flatnonzero(self.tags.ravel() == tag)

    def interpolation_weights(self, point, tol: float = 1e-9) -> dict[int, float]:
        """Bilinear weights ``{flat node: weight}`` for ``point``.

        Nodes with zero weight are dropped, so a point on a node or a cell
        edge depends only on the nodes it actually touches.  Raises
        :class:`OutsideDomainError` if any contributing node is Outside.
        """
        x, y = float(point[0]), float(point[1])
        x0, y0 = self.origin
        h = self.spacing
        s = (x - x0) / h
        t = (y - y0) / h
        eps = tol
        if s < -eps or t < -eps or s > self.ncols - 1 + eps or t > self.nrows - 1 + eps:
            raise OutsideDomainError(f"point ({x}, {y}) lies outside the grid rectangle")
        s = min(max(s, 0.0), self.ncols - 1)
        t = min(max(t, 0.0), self.nrows - 1)
        # snap to nodes within tolerance so node evaluation is exact
        if abs(s - round(s)) <= eps:
            s = float(round(s))
        if abs(t - round(t)) <= eps:
            t = float(round(t))
        i = min(int(np.floor(s)), self.ncols - 2)
        j = min(int(np.floor(t)), self.nrows - 2)
        fs = s - i
        ft = t - j
        weights = {}
        for dj, di, w in (
            (0, 0, (1 - fs) * (1 - ft)),
            (0, 1, fs * (1 - ft)),
            (1, 0, (1 - fs) * ft),
            (1, 1, fs * ft),
        ):
            if w == 0.0:
                continue
            if self.tags[j + dj, i + di] == Tag.OUTSIDE:
                raise OutsideDomainError(f"point ({x}, {y}) touches an Outside node")
            weights[self.flat(j + dj, i + di)] = w
        return weights

    def contains(self, point) -> bool:
        try:
            self.interpolation_weights(point)
        except OutsideDomainError:
            return False
        return True

    def node_at(self, point, tol: float = 1e-9):
        """Flat index of the node at ``point`` or None."""
        x0, y0 = self.origin
        s = (point[0] - x0) / self.spacing
        t = (point[1] - y0) / self.spacing
        i, j = round(s), round(t)
        if abs(s - i) > tol or abs(t - j) > tol:
            return None
        if not (0 <= i < self.ncols and 0 <= j < self.nrows):
            return None
        return self.flat(j, i)


def _parse_dirichlet(dirichlet) -> set[str]:
    if dirichlet is None or dirichlet == "none":
        return set()
    if dirichlet == "all":
        return set(EDGES)
    if isinstance(dirichlet, str):
        dirichlet = [s.strip() for s in dirichlet.split(",") if s.strip()]
    edges = set(dirichlet)
    unknown = edges - set(EDGES)
    if unknown:
        raise GridError(f"unknown edge names {sorted(unknown)}; expected {EDGES}")
    return edges


def build_grid(
    rect: Sequence[float],
    n_x: int,
    cutouts: Iterable[Polyline] = (),
    dirichlet="none",
    clamp_cutouts: bool = True,
) -> MaskedGrid:
    """Build a masked grid over ``rect = (x0, y0, x1, y1)`` with ``n_x`` intervals in x.

    Parameters
    ----------
    rect : sequence of 4 floats
        Map rectangle; its height must be an integer multiple of the spacing
        ``(x1 - x0) / n_x``.
    n_x : int
        Number of grid intervals along x (at least 4).
    cutouts : iterable of Polyline
        Closed polygons removed from the domain.  Nodes strictly inside are
        Outside; nodes exactly on a cutout edge stay active and are clamped.
    dirichlet : "all", "none" or iterable of edge names
        Rectangle edges carrying clamped conditions.  Remaining edges are
        natural.  A rectangle corner is clamped when either adjacent edge is.
    clamp_cutouts : bool
        Tag cutout rims clamped (default) or natural.
    """
    x0, y0, x1, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise GridError(f"degenerate rectangle {rect}")
    if n_x < 4:
        raise GridError(f"n_x must be >= 4, got {n_x}")
    h = (x1 - x0) / n_x
    ny_f = (y1 - y0) / h
    n_y = int(round(ny_f))
    if n_y < 4 or abs(n_y - ny_f) > 1e-9 * max(1.0, ny_f):
        raise GridError(
            f"rectangle height {y1 - y0} is not a multiple (>= 4) of spacing {h}"
        )
    edges = _parse_dirichlet(dirichlet)
    ncols, nrows = n_x + 1, n_y + 1
    X, Y = np.meshgrid(x0 + h * np.arange(ncols), y0 + h * np.arange(nrows))
    pts = np.column_stack([X.ravel(), Y.ravel()])

    tol = 1e-9 * h
    outside = np.zeros(pts.shape[0], dtype=bool)
    on_cut = np.zeros(pts.shape[0], dtype=bool)
    for n, poly in enumerate(cutouts):
        if not poly.closed:
            raise GridError(f"cutout {n} is not closed")
        v = poly.vertices
        if (v[:, 0].min() < x0 - tol or v[:, 0].max() > x1 + tol
                or v[:, 1].min() < y0 - tol or v[:, 1].max() > y1 + tol):
            raise GridError(f"cutout {n} is not contained in the rectangle")
        edge = distance_to_polyline(pts, poly) <= tol
        outside |= points_in_polygon(pts, poly) & ~edge
        on_cut |= edge
    outside &= ~on_cut
    outside = outside.reshape(nrows, ncols)
    on_cut = on_cut.reshape(nrows, ncols)
    active = ~outside

    padded = np.pad(outside, 1, constant_values=False)
    near_out = (padded[1:-1, 2:] | padded[1:-1, :-2] | padded[2:, 1:-1] | padded[:-2, 1:-1])
    rim = active & (near_out | on_cut)

    on_edge = {
        "left": np.zeros_like(active),
        "right": np.zeros_like(active),
        "bottom": np.zeros_like(active),
        "top": np.zeros_like(active),
    }
    on_edge["left"][:, 0] = True
    on_edge["right"][:, -1] = True
    on_edge["bottom"][0, :] = True
    on_edge["top"][-1, :] = True
    rect_edge = on_edge["left"] | on_edge["right"] | on_edge["bottom"] | on_edge["top"]
    clamped_edge = np.zeros_like(active)
    for name in edges:
        clamped_edge |= on_edge[name]

    tags = np.full((nrows, ncols), Tag.INTERIOR, dtype=np.int8)
    tags[outside] = Tag.OUTSIDE
    tags[active & rect_edge] = Tag.NATURAL
    tags[active & rect_edge & clamped_edge] = Tag.CLAMPED
    # cutout rims override rectangle-edge tags when clamped
    tags[rim & ~rect_edge] = Tag.CLAMPED if clamp_cutouts else Tag.NATURAL
    if clamp_cutouts:
        tags[rim & rect_edge] = Tag.CLAMPED

    grid = MaskedGrid((x0, y0), h, ncols, nrows, tags)
    validate_grid(grid)
    return grid


def validate_grid(grid: MaskedGrid) -> None:
    """Check connectivity and minimum thickness of the interior."""
    interior = grid.tags == Tag.INTERIOR
    if not interior.any():
        raise GridError("grid has no interior nodes")
    _, ncomp = ndimage.label(interior)
    if ncomp != 1:
        raise GridError(f"interior is disconnected ({ncomp} components)")
    for axis in (0, 1):
        runs = _run_lengths(interior, axis)
        thin = interior & (runs < 2)
        if thin.any():
            j, i = np.argwhere(thin)[0]
            raise GridError(
                f"interior too thin for the 13-point stencil near node (row {j}, col {i})"
            )


def _run_lengths(mask: np.ndarray, axis: int) -> np.ndarray:
    """Length of the run of True values containing each True entry along ``axis``."""
    m = mask if axis == 1 else mask.T
    out = np.zeros(m.shape, dtype=int)
    for r in range(m.shape[0]):
        row = m[r]
        c = 0
        while c < row.size:
            if row[c]:
                e = c
                while e < row.size and row[e]:
                    e += 1
                out[r, c:e] = e - c
                c = e
            else:
                c += 1
    return out if axis == 1 else out.T


def rasterize_polygon(grid: MaskedGrid, poly: Polyline) -> np.ndarray:
    """Boolean node mask (grid orientation) of nodes inside or on ``poly``."""
    X, Y = grid.coordinates()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = points_in_polygon(pts, poly) | (distance_to_polyline(pts, poly) <= 1e-9 * grid.spacing)
    return inside.reshape(grid.shape)


def extract_inner_curves(grid: MaskedGrid, mask, level: float = 0.5) -> list[Polyline]:
    """Contours of a node raster at ``level`` by marching squares.

    ``mask`` is an array of shape ``grid.shape`` in grid orientation (row 0
    south) or a :class:`bisurf.geodata.Raster` (north-up, flipped here).
    Contours are oriented with the high side on the left, so closed contours
    around a high region run counter-clockwise.  Contours leaving the
    rectangle are open with endpoints on its edge.  Saddle cells use the
    average of the four corners: an average at or above ``level`` joins the
    high corners.
    """
    values = getattr(mask, "values", None)
    if values is not None:
        values = np.flipud(np.asarray(values, dtype=float))
    else:
        values = np.asarray(mask, dtype=float)
    if values.shape != grid.shape:
        raise GridError(f"mask shape {values.shape} does not match grid {grid.shape}")
    x0, y0 = grid.origin
    h = grid.spacing
    high = values >= level

    points: dict[tuple, tuple[float, float]] = {}
    succ: dict[tuple, tuple] = {}
    order: list[tuple] = []

    def crossing(key, n0, n1):
        if key not in points:
            (j0, i0), (j1, i1) = n0, n1
            v0, v1 = values[j0, i0], values[j1, i1]
            t = (level - v0) / (v1 - v0)
            points[key] = (x0 + h * (i0 + t * (i1 - i0)), y0 + h * (j0 + t * (j1 - j0)))
        return key

    nrows, ncols = grid.shape
    for j in range(nrows - 1):
        for i in range(ncols - 1):
            corners = ((j, i), (j, i + 1), (j + 1, i + 1), (j + 1, i))
            hs = [bool(high[c]) for c in corners]
            if all(hs) or not any(hs):
                continue
            ekeys = (("h", j, i), ("v", j, i + 1), ("h", j + 1, i), ("v", j, i))
            crossed = []  # (edge position, high-to-low?)
            for m in range(4):
                a, b = corners[m], corners[(m + 1) % 4]
                if hs[m] != hs[(m + 1) % 4]:
                    # edge keys are stored with the lower-index node first
                    n0, n1 = (a, b) if a <= b else (b, a)
                    crossing(ekeys[m], n0, n1)
                    crossed.append((m, hs[m]))
            center_high = np.mean([values[c] for c in corners]) >= level
            nc = len(crossed)
            for q, (m, h2l) in enumerate(crossed):
                if not h2l:
                    continue
                if nc == 2 or center_high:
                    partner = crossed[(q + 1) % nc][0]
                else:
                    partner = crossed[(q - 1) % nc][0]
                start, end = ekeys[m], ekeys[partner]
                succ[start] = end
                order.append(start)

    ends = set(succ.values())
    curves: list[Polyline] = []
    used: set = set()

    def walk(start):
        chain = [start]
        used.add(start)
        k = start
        while k in succ:
            k = succ[k]
            if k == start:
                return chain, True
            chain.append(k)
            used.add(k)
        return chain, False

    for start in order:
        if start not in ends and start not in used:
            chain, closed = walk(start)
            curves.append(_polyline_from_keys(chain, points, closed))
    for start in order:
        if start not in used:
            chain, closed = walk(start)
            curves.append(_polyline_from_keys(chain, points, closed))
    return curves


def _polyline_from_keys(chain, points, closed) -> Polyline:
    v = np.array([points[k] for k in chain])
    keep = np.ones(len(v), dtype=bool)
    keep[1:] = np.any(np.diff(v, axis=0) != 0.0, axis=1)
    v = v[keep]
    if closed and len(v) > 1 and np.array_equal(v[0], v[-1]):
        v = v[:-1]
    return Polyline(v, closed=closed)


def sample_curve_points(curve: Polyline, n: int) -> np.ndarray:
    """``n`` points at equal arclength spacing along ``curve``.

    Closed curves start at vertex 0 with spacing ``L/n``; open curves include
    both endpoints with spacing ``L/(n-1)``.  Returns an ``(n, 2)`` array.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    v = curve.vertices
    if curve.closed:
        v = np.vstack([v, v[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(v, axis=0).T))])
    L = s[-1]
    if n == 1:
        targets = np.zeros(1)
    elif curve.closed:
        targets = L * np.arange(n) / n
    else:
        targets = L * np.arange(n) / (n - 1)
    return np.column_stack([np.interp(targets, s, v[:, 0]), np.interp(targets, s, v[:, 1])])
