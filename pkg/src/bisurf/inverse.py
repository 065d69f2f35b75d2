"""Boundary-data reconstruction from inner-curve data by truncated SVD.

The unknowns are the full dof vector of the operator (node values and
clamped-boundary derivative dofs).  The stacked system is

    [ s * A1 ]       [ s * b_I ]
    [   C1   ]  c =  [   b_1   ]
    [   C2   ]       [   b_2   ]

with ``A1`` the biharmonic operator rows, ``C1`` point evaluations, ``C2``
derivative evaluations and ``s`` a row scale (``h**4`` by default) that
brings the operator rows to the magnitude of the evaluation rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .assembly import (
    BiharmonicOperator,
    BoundaryData,
    SurfaceField,
    evaluation_row,
    normal_derivative_row,
    solve_forward,
)
from .errors import LCurveError, OutsideDomainError

VALUE = "value"
NORMAL_DERIV = "normal_deriv"

#: Points with residual norm below this fraction of ``||b||`` are dropped
#: from the L-curve before taking logarithms.
RESIDUAL_FLOOR = 1e-14
#: Consecutive L-curve points closer than this in log space are merged.
COINCIDENT_TOL = 1e-10
#: Default minimum log-arclength gap, as a fraction of the curve length,
#: between a candidate corner and the two points defining its circle.
MIN_SEPARATION = 0.02


@dataclass(frozen=True)
class CurveDatum:
    """A value or derivative observation at a point.

    ``normal`` is required for ``kind == "normal_deriv"``.
    """

    point: tuple[float, float]
    value: float
    kind: str = VALUE
    normal: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in (VALUE, NORMAL_DERIV):
            raise ValueError(f"unknown datum kind {self.kind!r}")
        if self.kind == NORMAL_DERIV and self.normal is None:
            raise ValueError("derivative datum needs a normal")


@dataclass(frozen=True)
class BlockSystem:
    """Stacked operator and curve-data rows."""

    A1: sp.csr_matrix = field(repr=False)
    C1: sp.csr_matrix = field(repr=False)
    C2: sp.csr_matrix = field(repr=False)
    b_I: np.ndarray = field(repr=False)
    b_1: np.ndarray = field(repr=False)
    b_2: np.ndarray = field(repr=False)
    scale: float = 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.A1.shape[0] + self.C1.shape[0] + self.C2.shape[0], self.A1.shape[1])

    @property
    def n_dof(self) -> int:
        return self.A1.shape[1]

    @property
    def is_quadratic(self) -> bool:
        return self.shape[0] == self.shape[1]

    @property
    def A(self) -> np.ndarray:
        return sp.vstack([self.scale * self.A1, self.C1, self.C2]).toarray()

    @property
    def b(self) -> np.ndarray:
        return np.concatenate([self.scale * self.b_I, self.b_1, self.b_2])

    @property
    def b_B(self) -> np.ndarray:
        return np.concatenate([self.b_1, self.b_2])


def boundary_derivative_data(op: BiharmonicOperator, value: float = 0.0) -> list[CurveDatum]:
    """One derivative datum per clamped derivative dof, all equal to ``value``."""
    out = []
    for node, d in op.derivative_dofs:
        x, y = op.grid.node_xy(node)
        out.append(CurveDatum((float(x), float(y)), float(value), NORMAL_DERIV, (float(d[0]), float(d[1]))))
    return out


def _empty(n_cols: int) -> sp.csr_matrix:
    return sp.csr_matrix((0, n_cols))


def assemble_block_system(
    op: BiharmonicOperator,
    data: Sequence[CurveDatum],
    rhs: np.ndarray,
    scale: float | None = None,
) -> BlockSystem:
    """Stack the operator rows with evaluation rows for ``data``.

    Parameters
    ----------
    op : BiharmonicOperator
    data : sequence of CurveDatum
        Value data become ``C1`` rows, derivative data ``C2`` rows, each in
        input order.
    rhs : ndarray
        Operator right-hand side, one entry per operator row.
    scale : float, optional
        Factor applied to the operator rows and ``rhs``; ``h**4`` if omitted.

    Raises
    ------
    OutsideDomainError
        If a datum lies in the Outside region; the message names its index.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (op.n_rows,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({op.n_rows},)")
    if scale is None:
        scale = op.grid.spacing ** 4
    rows1, vals1, rows2, vals2 = [], [], [], []
    for n, d in enumerate(data):
        try:
            if d.kind == VALUE:
                rows1.append(evaluation_row(op, d.point))
                vals1.append(d.value)
            else:
                rows2.append(normal_derivative_row(op, d.point, d.normal))
                vals2.append(d.value)
        except OutsideDomainError as exc:
            raise OutsideDomainError(f"curve datum {n} at {tuple(d.point)}: {exc}") from exc
    C1 = sp.vstack(rows1).tocsr() if rows1 else _empty(op.n_cols)
    C2 = sp.vstack(rows2).tocsr() if rows2 else _empty(op.n_cols)
    return BlockSystem(op.matrix.tocsr(), C1, C2, rhs, np.array(vals1, dtype=float),
                       np.array(vals2, dtype=float), float(scale))


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


@dataclass(frozen=True)
class Svd:
    """Thin SVD ``A = U diag(s) Vt``."""

    U: np.ndarray = field(repr=False)
    s: np.ndarray
    Vt: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, A) -> "Svd":
        A = _dense(A)
        if A.ndim != 2 or A.size == 0:
            raise ValueError("matrix must be two-dimensional and nonempty")
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        return cls(U, s, Vt)

    @property
    def inverse_s(self) -> np.ndarray:
        """Reciprocal singular values, 0 where a singular value is exactly 0."""
        out = np.zeros_like(self.s)
        np.divide(1.0, self.s, out=out, where=self.s > 0)
        return out


@dataclass(frozen=True)
class TsvdSolution:
    k: int
    coefficients: np.ndarray = field(repr=False)
    solution_norm: float
    residual_norm: float
    singular_values: np.ndarray = field(repr=False)


def _as_svd(A) -> Svd:
    return A if isinstance(A, Svd) else Svd.of(A)


def tsvd_solve(A, b: np.ndarray, k: int) -> TsvdSolution:
    """Minimal-norm least-squares solution keeping the ``k`` largest singular values.

    ``A`` may be a matrix or a precomputed :class:`Svd`.
    """
    svd = _as_svd(A)
    b = np.asarray(b, dtype=float)
    p = len(svd.s)
    if not 1 <= k <= p:
        raise ValueError(f"truncation rank k={k} outside 1..{p}")
    beta = svd.U.T @ b
    c = svd.Vt[:k].T @ (beta[:k] * svd.inverse_s[:k])
    resid = b - svd.U[:, :k] @ beta[:k]
    return TsvdSolution(k, c, float(np.linalg.norm(c)), float(np.linalg.norm(resid)), svd.s.copy())


@dataclass(frozen=True)
class NormsCurve:
    """Solution and residual norms of every truncation rank."""

    k: np.ndarray
    solution_norm: np.ndarray
    residual_norm: np.ndarray
    b_norm: float

    def __len__(self) -> int:
        return len(self.k)

    def __iter__(self) -> Iterator[tuple[int, float, float]]:
        for k, eta, rho in zip(self.k, self.solution_norm, self.residual_norm):
            yield int(k), float(eta), float(rho)


def norms_curve(A, b: np.ndarray) -> NormsCurve:
    """Norms of the truncated solutions from a single SVD.

    ``||c_k||^2`` is the partial sum of ``(u_j.b / s_j)^2`` and
    ``||b - A c_k||^2`` the tail sum of ``(u_j.b)^2`` plus the part of ``b``
    outside the range of ``U``.
    """
    svd = _as_svd(A)
    b = np.asarray(b, dtype=float)
    beta = svd.U.T @ b
    eta = np.sqrt(np.cumsum((beta * svd.inverse_s) ** 2))
    perp2 = float(np.linalg.norm(b - svd.U @ beta) ** 2)
    tail = np.cumsum((beta ** 2)[::-1])[::-1]
    rho = np.sqrt(np.append(tail[1:], 0.0) + perp2)
    k = np.arange(1, len(svd.s) + 1)
    return NormsCurve(k, eta, rho, float(np.linalg.norm(b)))


def circle_curvature(p0, p1, p2) -> float:
    """Signed curvature of the circle through three points.

    Positive for a clockwise turn, the orientation of the corner of an
    L-curve traversed in increasing rank.  Zero for coincident points.
    """
    a = np.subtract(p1, p0)
    c = np.subtract(p2, p1)
    cross = a[0] * c[1] - a[1] * c[0]
    denom = np.hypot(*a) * np.hypot(*c) * np.hypot(*(a + c))
    return float(-2.0 * cross / denom) if denom > 0 else 0.0


def lcurve_points(curve: NormsCurve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ranks and log coordinates of the usable L-curve points.

    Drops points with a residual below ``RESIDUAL_FLOOR * ||b||`` or a zero
    solution norm, then merges runs of coincident points into their smallest
    rank (a circle through repeated points is undefined).
    """
    ok = (curve.residual_norm > RESIDUAL_FLOOR * curve.b_norm) & (curve.solution_norm > 0)
    k = curve.k[ok]
    x = np.log(curve.residual_norm[ok])
    y = np.log(curve.solution_norm[ok])
    keep = []
    for m in range(len(k)):
        if keep and abs(x[m] - x[keep[-1]]) <= COINCIDENT_TOL and abs(y[m] - y[keep[-1]]) <= COINCIDENT_TOL:
            continue
        keep.append(m)
    return k[keep], x[keep], y[keep]


def lcurve_curvature(curve: NormsCurve, min_separation: float = MIN_SEPARATION):
    """Ranks of the interior usable points and their signed curvature.

    The circle for point ``m`` passes through the nearest usable points on
    either side that lie at least ``min_separation`` times the total
    log-arclength away (the adjacent points if none do).  With
    ``min_separation = 0`` the circle uses adjacent points, which on dense
    spectra lets tiny local wiggles outweigh the corner.
    """
    k, x, y = lcurve_points(curve)
    if len(k) < 3:
        raise LCurveError(f"L-curve degenerate: {len(k)} usable points")
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    gap = min_separation * s[-1]
    n = len(k)
    kappa = np.empty(n - 2)
    for m in range(1, n - 1):
        i = int(np.searchsorted(s, s[m] - gap, side="right")) - 1
        j = int(np.searchsorted(s, s[m] + gap, side="left"))
        i = min(max(i, 0), m - 1)
        j = max(min(j, n - 1), m + 1)
        kappa[m - 1] = circle_curvature((x[i], y[i]), (x[m], y[m]), (x[j], y[j]))
    return k[1:-1], kappa


def lcurve_corner(curve: NormsCurve, min_separation: float = MIN_SEPARATION) -> int:
    """Rank at the maximum signed curvature of the log-log L-curve.

    Ties go to the smallest rank.  A curve without a corner still returns
    its most curved point.

    Raises
    ------
    LCurveError
        Fewer than three usable points.
    """
    k, kappa = lcurve_curvature(curve, min_separation)
    return int(k[int(np.argmax(kappa))])


def condition_number(A) -> float:
    """Ratio of the extreme singular values (no thresholding)."""
    s = A.s if isinstance(A, Svd) else np.linalg.svd(_dense(A), compute_uv=False)
    if s[0] == 0:
        raise ValueError("zero matrix")
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def extract_boundary_values(c: np.ndarray, op: BiharmonicOperator) -> BoundaryData:
    """Clamped values and derivative dofs read out of a full dof vector."""
    c = np.asarray(c, dtype=float)
    if c.shape != (op.n_cols,):
        raise ValueError(f"coefficient vector has shape {c.shape}, expected ({op.n_cols},)")
    nodes = op.value_nodes[op.boundary_value_cols]
    f = {int(n): float(c[col]) for n, col in zip(nodes, op.boundary_value_cols)}
    h = {key: float(c[op.n_values + m]) for m, key in enumerate(op.derivative_dofs)}
    return BoundaryData(f, h)


@dataclass(frozen=True)
class Reconstruction:
    system: BlockSystem = field(repr=False)
    svd: Svd = field(repr=False)
    curve: NormsCurve = field(repr=False)
    k: int
    solution: TsvdSolution = field(repr=False)
    boundary: BoundaryData = field(repr=False)
    surface: SurfaceField = field(repr=False)
    k_from_lcurve: bool = True

    @property
    def condition_number(self) -> float:
        s = self.svd.s
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def reconstruct_boundary(
    op: BiharmonicOperator,
    rhs: np.ndarray,
    data: Sequence[CurveDatum],
    k: int | None = None,
    scale: float | None = None,
    min_separation: float = MIN_SEPARATION,
) -> Reconstruction:
    """Recover boundary data from curve data and re-solve the forward problem.

    The truncation rank is the L-curve corner unless ``k`` is given.
    """
    system = assemble_block_system(op, data, rhs, scale)
    svd = Svd.of(system.A)
    b = system.b
    curve = norms_curve(svd, b)
    chosen = lcurve_corner(curve, min_separation) if k is None else int(k)
    sol = tsvd_solve(svd, b, chosen)
    bd = extract_boundary_values(sol.coefficients, op)
    fld = solve_forward(op, rhs, bd)
    return Reconstruction(system, svd, curve, chosen, sol, bd, fld, k is None)


def boundary_residual(bd: BoundaryData, reference: BoundaryData | None = None) -> float:
    """Largest deviation of the boundary values from ``reference`` (zero by default)."""
    if not bd.f:
        return 0.0
    ref = reference.f if reference is not None else {}
    return max(abs(v - ref.get(n, 0.0)) for n, v in bd.f.items())
