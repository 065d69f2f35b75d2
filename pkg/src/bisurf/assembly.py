"""Finite-difference biharmonic operator on masked grids and the forward solve.

The operator is the 5-point Laplacian applied twice, ``L(L u)``, which is
the 13-point stencil (20, -8, 2, 1) / h^4 away from the boundary.  Values
outside the domain are eliminated as follows:

* clamped node ``K`` with an Outside neighbour in direction ``d``: the ghost
  value is ``u(K - d) + 2 h D(K, d)`` where ``D(K, d)`` is the outward
  derivative of ``u`` at ``K`` along ``d``.  Each such ``(K, d)`` pair is a
  derivative dof (a column of the operator).
* natural node ``B``: ``L u(B) = 0`` and the reflected Laplacian
  ``L u(B + d) = L u(B - d)`` (a central difference for the normal derivative
  of the Laplacian).  Corners joining two natural edges get a zero-twist row
  ``u_C - u_{C-d1} - u_{C-d2} + u_{C-d1-d2} = 0``.

Columns are ordered as all active node values (ascending flat index) followed
by derivative dofs sorted by ``(node, direction)``.  Rows are Interior and
natural nodes in ascending flat order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from .errors import ForwardProblemError, GridError, OutsideDomainError
from .grid import DIRECTIONS, MaskedGrid, Tag

#: Reduced forward systems with a larger 1-norm condition estimate are
#: treated as singular.
MAX_CONDITION = 1e14


@dataclass(frozen=True)
class GaussianLoad:
    """Radial load bump ``exp(-|x - center|^2 / (2 sigma^2)) / (sigma sqrt(2 pi))``."""

    center: tuple[float, float]
    sigma: float
    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.lower > self.upper:
            raise ValueError(f"bounds [{self.lower}, {self.upper}] are empty")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def __call__(self, x, y):
        r2 = (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2
        return np.exp(-0.5 * r2 / self.sigma**2) / (self.sigma * np.sqrt(2 * np.pi))


def _natural_corner(grid: MaskedGrid, j: int, i: int):
    """Outside directions of a natural node; validated to be a usable shape."""
    out = [d for d in DIRECTIONS if grid.tag_at(j + d[1], i + d[0]) == Tag.OUTSIDE]
    return out


def row_nodes(grid: MaskedGrid) -> np.ndarray:
    """Flat indices of nodes that carry an equation (Interior and natural)."""
    t = grid.tags.ravel()
    return np.flatnonzero((t == Tag.INTERIOR) | (t == Tag.NATURAL))


def _is_twist_row(grid: MaskedGrid, k: int) -> bool:
    j, i = divmod(int(k), grid.ncols)
    return grid.tags[j, i] == Tag.NATURAL and len(_natural_corner(grid, j, i)) >= 2


@dataclass(frozen=True)
class BiharmonicOperator:
    """Assembled discrete biharmonic operator.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        ``(n_rows, n_cols)`` operator, entries in units of h^-4.
    row_nodes : ndarray
        Flat node index of each row.
    value_nodes : ndarray
        Flat node index of each value column (first ``n_values`` columns).
    derivative_dofs : tuple of (node, (di, dj))
        Clamped node and outward axis direction of each derivative column.
    """

    grid: MaskedGrid
    matrix: sp.csr_matrix = field(repr=False)
    row_nodes: np.ndarray = field(repr=False)
    value_nodes: np.ndarray = field(repr=False)
    derivative_dofs: tuple = field(repr=False)
    load_rows: np.ndarray = field(repr=False)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_values(self) -> int:
        return len(self.value_nodes)

    @cached_property
    def node_col(self) -> np.ndarray:
        """Column of each grid node's value dof, -1 for Outside nodes."""
        out = np.full(self.grid.size, -1, dtype=int)
        out[self.value_nodes] = np.arange(self.n_values)
        return out

    @cached_property
    def derivative_col(self) -> dict:
        return {key: self.n_values + m for m, key in enumerate(self.derivative_dofs)}

    @cached_property
    def boundary_value_cols(self) -> np.ndarray:
        tags = self.grid.tags.ravel()[self.value_nodes]
        return np.flatnonzero(tags == Tag.CLAMPED)

    @cached_property
    def boundary_normal_cols(self) -> np.ndarray:
        return np.arange(self.n_values, self.n_cols)

    @cached_property
    def known_cols(self) -> np.ndarray:
        """Columns fixed by clamped boundary data: values f, then derivatives h."""
        return np.concatenate([self.boundary_value_cols, self.boundary_normal_cols])

    @cached_property
    def unknown_cols(self) -> np.ndarray:
        tags = self.grid.tags.ravel()[self.value_nodes]
        return np.flatnonzero(tags != Tag.CLAMPED)

    @cached_property
    def _forward_lu(self):
        if len(self.boundary_value_cols) == 0:
            raise ForwardProblemError("forward problem not well-posed: no clamped boundary")
        A = self.matrix.tocsc()[:, self.unknown_cols]
        if A.shape[0] != A.shape[1]:
            raise ForwardProblemError(
                f"forward problem not well-posed: {A.shape[0]} equations for {A.shape[1]} unknowns"
            )
        try:
            lu = splu(A.tocsc())
        except RuntimeError as exc:
            raise ForwardProblemError(f"forward problem not well-posed: {exc}") from exc
        diag = np.abs(lu.U.diagonal())
        if diag.min() <= 1e-13 * diag.max():
            raise ForwardProblemError("forward problem not well-posed: singular reduced system")
        n = A.shape[0]
        inv = LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="T"),
                             dtype=float)
        cond = onenormest(A) * onenormest(inv)
        if cond > MAX_CONDITION:
            raise ForwardProblemError(
                f"forward problem not well-posed: condition estimate {cond:.2e} exceeds {MAX_CONDITION:.0e}"
            )
        return lu

    def apply(self, c: np.ndarray) -> np.ndarray:
        return self.matrix @ c


def assemble_operator(grid: MaskedGrid) -> BiharmonicOperator:
    """Assemble the biharmonic operator for ``grid``.

    Raises :class:`GridError` where the geometry leaves a ghost value
    without an active mirror node or a natural corner of unsupported shape.
    """
    h = grid.spacing
    inv_h2 = 1.0 / h**2
    tags = grid.tags
    nrows, ncols = grid.shape

    def active(j, i):
        return grid.tag_at(j, i) != Tag.OUTSIDE

    w_cache: dict[tuple[int, int], dict] = {}

    def lap_u(j, i) -> dict:
        """5-point Laplacian of u at an active node, ghosts eliminated."""
        key = (j, i)
        if key in w_cache:
            return w_cache[key]
        tag = tags[j, i]
        if tag == Tag.NATURAL:
            w_cache[key] = {}
            return w_cache[key]
        expr: dict = {}

        def add(k, v):
            expr[k] = expr.get(k, 0.0) + v

        add(("u", j, i), -4.0 * inv_h2)
        for di, dj in DIRECTIONS:
            if active(j + dj, i + di):
                add(("u", j + dj, i + di), inv_h2)
                continue
            if tag != Tag.CLAMPED:
                raise GridError(f"interior node (row {j}, col {i}) has an Outside neighbour")
            if not active(j - dj, i - di):
                raise GridError(
                    f"clamped node (row {j}, col {i}) has no mirror node for direction {(di, dj)}"
                )
            add(("u", j - dj, i - di), inv_h2)
            add(("d", grid.flat(j, i), (di, dj)), 2.0 * h * inv_h2)
        w_cache[key] = expr
        return expr

    entries: list[dict] = []
    rnodes = row_nodes(grid)
    load_rows = np.ones(len(rnodes), dtype=bool)
    for r, k in enumerate(rnodes):
        j, i = divmod(int(k), ncols)
        row: dict = {}

        def acc(expr, s):
            for key, v in expr.items():
                row[key] = row.get(key, 0.0) + s * v

        if tags[j, i] == Tag.INTERIOR:
            acc(lap_u(j, i), -4.0 * inv_h2)
            for di, dj in DIRECTIONS:
                acc(lap_u(j + dj, i + di), inv_h2)
        else:
            out = _natural_corner(grid, j, i)
            if len(out) == 0:
                for di, dj in DIRECTIONS:
                    acc(lap_u(j + dj, i + di), inv_h2)
            elif len(out) == 1:
                di0, dj0 = out[0]
                if not active(j - dj0, i - di0):
                    raise GridError(f"natural node (row {j}, col {i}) has no inner neighbour")
                for di, dj in DIRECTIONS:
                    if (di, dj) == (di0, dj0):
                        acc(lap_u(j - dj, i - di), inv_h2)
                    else:
                        acc(lap_u(j + dj, i + di), inv_h2)
            else:
                if len(out) != 2 or np.dot(out[0], out[1]) != 0:
                    raise GridError(f"natural node (row {j}, col {i}) is a degenerate corner")
                (a1, b1), (a2, b2) = out
                nbrs = [(j - b1, i - a1), (j - b2, i - a2), (j - b1 - b2, i - a1 - a2)]
                if not all(active(*n) for n in nbrs):
                    raise GridError(f"natural corner (row {j}, col {i}) lacks inner nodes")
                s = inv_h2 * inv_h2
                row = {("u", j, i): s, ("u", *nbrs[0]): -s, ("u", *nbrs[1]): -s, ("u", *nbrs[2]): s}
                load_rows[r] = False
        entries.append(row)

    value_nodes = np.flatnonzero(grid.inside.ravel())
    node_col = np.full(grid.size, -1, dtype=int)
    node_col[value_nodes] = np.arange(len(value_nodes))
    dkeys = sorted({key[1:] for row in entries for key in row if key[0] == "d"})
    dcol = {key: len(value_nodes) + m for m, key in enumerate(dkeys)}

    rows, cols, vals = [], [], []
    for r, row in enumerate(entries):
        for key, v in row.items():
            if v == 0.0:
                continue
            if key[0] == "u":
                c = node_col[grid.flat(key[1], key[2])]
            else:
                c = dcol[key[1:]]
            rows.append(r)
            cols.append(c)
            vals.append(v)
    shape = (len(rnodes), len(value_nodes) + len(dkeys))
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    matrix.sum_duplicates()
    return BiharmonicOperator(
        grid=grid,
        matrix=matrix,
        row_nodes=rnodes,
        value_nodes=value_nodes,
        derivative_dofs=tuple(dkeys),
        load_rows=load_rows,
    )


def assemble_gaussian_load(grid: MaskedGrid, loads: Sequence[GaussianLoad], weights=None) -> np.ndarray:
    """Collocated right-hand side ``sum_j p_j g_j(node)`` over the operator rows.

    ``weights`` defaults to all ones.  Zero-twist corner rows get 0.
    """
    rnodes = row_nodes(grid)
    rhs = np.zeros(len(rnodes))
    if weights is None:
        weights = np.ones(len(loads))
    X, Y = grid.coordinates()
    x, y = X.ravel()[rnodes], Y.ravel()[rnodes]
    for n, load in enumerate(loads):
        if not grid.contains(load.center):
            raise OutsideDomainError(f"load {n} center {load.center} is outside the domain")
        rhs += weights[n] * load(x, y)
    twist = np.array([_is_twist_row(grid, k) for k in rnodes], dtype=bool)
    rhs[twist] = 0.0
    return rhs


def assemble_constant_load(grid: MaskedGrid, q: float) -> np.ndarray:
    rnodes = row_nodes(grid)
    rhs = np.full(len(rnodes), float(q))
    twist = np.array([_is_twist_row(grid, k) for k in rnodes], dtype=bool)
    rhs[twist] = 0.0
    return rhs


def assemble_function_load(grid: MaskedGrid, q: Callable) -> np.ndarray:
    """Right-hand side from a vectorised callable ``q(x, y)``."""
    rnodes = row_nodes(grid)
    X, Y = grid.coordinates()
    rhs = np.asarray(q(X.ravel()[rnodes], Y.ravel()[rnodes]), dtype=float) * np.ones(len(rnodes))
    twist = np.array([_is_twist_row(grid, k) for k in rnodes], dtype=bool)
    rhs[twist] = 0.0
    return rhs


@dataclass(frozen=True)
class BoundaryData:
    """Clamped boundary data.

    ``f`` maps each clamped node (flat index) to its value.  ``h`` maps each
    derivative dof ``(node, (di, dj))`` to the outward derivative along that
    axis direction; a straight boundary node has one entry, the outward
    normal derivative.
    """

    f: dict
    h: dict

    @classmethod
    def zeros(cls, op: BiharmonicOperator) -> "BoundaryData":
        nodes = op.value_nodes[op.boundary_value_cols]
        return cls({int(k): 0.0 for k in nodes}, {key: 0.0 for key in op.derivative_dofs})

    @classmethod
    def from_functions(cls, op: BiharmonicOperator, u: Callable, grad: Callable | None = None):
        """Sample ``u(x, y)`` and ``grad(x, y) -> (ux, uy)`` on the clamped boundary."""
        grid = op.grid
        f = {}
        for k in op.value_nodes[op.boundary_value_cols]:
            x, y = grid.node_xy(k)
            f[int(k)] = float(u(x, y))
        h = {}
        for node, (di, dj) in op.derivative_dofs:
            if grad is None:
                h[(node, (di, dj))] = 0.0
            else:
                x, y = grid.node_xy(node)
                gx, gy = grad(x, y)
                h[(node, (di, dj))] = float(di * gx + dj * gy)
        return cls(f, h)

    def known_vector(self, op: BiharmonicOperator) -> np.ndarray:
        """Values on ``op.known_cols`` (clamped values, then derivatives)."""
        nodes = op.value_nodes[op.boundary_value_cols]
        missing = [int(k) for k in nodes if int(k) not in self.f]
        if missing or any(key not in self.h for key in op.derivative_dofs):
            raise ValueError("boundary data does not cover every clamped node and derivative dof")
        fv = np.array([self.f[int(k)] for k in nodes], dtype=float)
        hv = np.array([self.h[key] for key in op.derivative_dofs], dtype=float)
        return np.concatenate([fv, hv])

    def scaled(self, alpha: float) -> "BoundaryData":
        return BoundaryData({k: alpha * v for k, v in self.f.items()},
                            {k: alpha * v for k, v in self.h.items()})


@dataclass(frozen=True)
class SurfaceField:
    """Nodal values over a grid, NaN on Outside nodes."""

    grid: MaskedGrid
    values: np.ndarray = field(repr=False)
    coefficients: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        v[~self.grid.inside] = np.nan
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_coefficients(cls, op: BiharmonicOperator, c: np.ndarray) -> "SurfaceField":
        vals = np.full(op.grid.size, np.nan)
        vals[op.value_nodes] = c[: op.n_values]
        return cls(op.grid, vals.reshape(op.grid.shape), coefficients=np.array(c, dtype=float))

    def __add__(self, other: "SurfaceField") -> "SurfaceField":
        return SurfaceField(self.grid, self.values + other.values)

    def __mul__(self, alpha: float) -> "SurfaceField":
        return SurfaceField(self.grid, alpha * self.values)

    __rmul__ = __mul__


def coefficients_from_function(op: BiharmonicOperator, u: Callable, grad: Callable | None = None) -> np.ndarray:
    """Dof vector sampling ``u`` at active nodes and ``grad`` at derivative dofs."""
    X, Y = op.grid.coordinates()
    c = np.zeros(op.n_cols)
    c[: op.n_values] = u(X.ravel()[op.value_nodes], Y.ravel()[op.value_nodes])
    for m, (node, (di, dj)) in enumerate(op.derivative_dofs):
        if grad is not None:
            x, y = op.grid.node_xy(node)
            gx, gy = grad(x, y)
            c[op.n_values + m] = di * gx + dj * gy
    return c


def solve_forward_coefficients(op: BiharmonicOperator, rhs: np.ndarray, bc: BoundaryData) -> np.ndarray:
    """Full dof vector of the forward solution."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.n_rows,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({op.n_rows},)")
    known = bc.known_vector(op)
    A = op.matrix.tocsc()
    b = rhs - A[:, op.known_cols] @ known
    x = op._forward_lu.solve(b)
    c = np.zeros(op.n_cols)
    c[op.unknown_cols] = x
    c[op.known_cols] = known
    if not np.all(np.isfinite(c)):
        raise ForwardProblemError("forward problem not well-posed: non-finite solution")
    res = np.abs(op.matrix @ c - rhs).max() if op.n_rows else 0.0
    if res > 1e-8 * (1.0 + np.abs(rhs).max()):
        # one step of iterative refinement before giving up
        x += op._forward_lu.solve(rhs - op.matrix @ c)
        c[op.unknown_cols] = x
        res = np.abs(op.matrix @ c - rhs).max()
        if res > 1e-8 * (1.0 + np.abs(rhs).max()):
            raise ForwardProblemError(f"forward problem not well-posed: residual {res:.3e}")
    return c


def solve_forward(op: BiharmonicOperator, rhs: np.ndarray, bc: BoundaryData | None = None) -> SurfaceField:
    """Solve the clamped/natural forward problem; ``bc`` defaults to homogeneous data."""
    if bc is None:
        bc = BoundaryData.zeros(op)
    return SurfaceField.from_coefficients(op, solve_forward_coefficients(op, rhs, bc))


def solve_homogeneous_many(op: BiharmonicOperator, rhs_columns: np.ndarray) -> np.ndarray:
    """Forward solves with zero boundary data for each column of ``rhs_columns``.

    Returns full dof vectors as columns, one factorisation shared.
    """
    R = np.asarray(rhs_columns, dtype=float).reshape(op.n_rows, -1)
    A = op.matrix.tocsc()[:, op.unknown_cols]
    X = op._forward_lu.solve(R)
    out = np.zeros((op.n_cols, R.shape[1]))
    out[op.unknown_cols] = X
    res = np.abs(A @ X - R).max(axis=0)
    bad = res > 1e-8 * (1.0 + np.abs(R).max(axis=0))
    if np.any(bad):
        raise ForwardProblemError(f"forward problem not well-posed: residual {res.max():.3e}")
    return out


def evaluate_at(field: SurfaceField, point) -> float:
    """Bilinear interpolation of ``field`` at ``point``; exact at nodes."""
    w = field.grid.interpolation_weights(point)
    vals = field.values.ravel()
    return float(sum(wk * vals[k] for k, wk in w.items()))


def evaluation_row(op: BiharmonicOperator, point) -> sp.csr_matrix:
    """Sparse ``1 x n_cols`` row with ``row @ c == evaluate_at(field(c), point)``."""
    w = op.grid.interpolation_weights(point)
    cols = [op.node_col[k] for k in w]
    return sp.csr_matrix((list(w.values()), ([0] * len(cols), cols)), shape=(1, op.n_cols))


def normal_derivative_row(op: BiharmonicOperator, point, normal: Sequence[float]) -> sp.csr_matrix:
    """Sparse row estimating the derivative of u^h at ``point`` along ``normal``.

    At a clamped node whose derivative dof points along ``normal`` this is
    that dof.  Otherwise a central difference of the bilinear interpolant
    with step h is used, falling back to the one-sided second-order formula
    ``(3 u(p) - 4 u(p - h n) + u(p - 2 h n)) / (2 h)`` when ``p + h n`` is
    not in the domain.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    p = np.asarray(point, dtype=float)
    grid = op.grid
    h = grid.spacing
    node = grid.node_at(p)
    if node is not None:
        for d in DIRECTIONS:
            if np.allclose(n, d, atol=1e-12) and (node, d) in op.derivative_col:
                col = op.derivative_col[(node, d)]
                return sp.csr_matrix(([1.0], ([0], [col])), shape=(1, op.n_cols))
    try:
        fwd = evaluation_row(op, p + h * n)
        bwd = evaluation_row(op, p - h * n)
        return ((fwd - bwd) / (2 * h)).tocsr()
    except OutsideDomainError:
        pass
    rows = [evaluation_row(op, p - s * h * n) for s in (0, 1, 2)]
    return ((3 * rows[0] - 4 * rows[1] + rows[2]) / (2 * h)).tocsr()
