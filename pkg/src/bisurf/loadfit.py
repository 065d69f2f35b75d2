"""Load weights from well data by bound-constrained least squares.

The surface is ``u(x; p) = sum_j p_j u_j(x) + u_bc(x)`` where ``u_j`` solves
the clamped problem with a Gaussian load ``q_j`` and zero boundary data.
The weights minimise ``sum_i (d_i - u(xi_i; p))^2`` over all wells subject to
``u(xi_i; p) = d_i`` at equality wells, ``u(xi_i; p) >= d_i`` at inequality
wells and ``a_j <= p_j <= b_j``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .assembly import (
    BiharmonicOperator,
    GaussianLoad,
    SurfaceField,
    assemble_gaussian_load,
    evaluate_at,
    solve_homogeneous_many,
)
from .errors import InfeasibleError

EQ_BOUNDS = (0.0, 2.0)
GE_BOUNDS = (-1.0, 1.0)
SIGMA = 1.5
TOL_EQ = 1e-6


class WellKind(enum.Enum):
    EQUALITY = "eq"
    INEQUALITY = "ge"


@dataclass(frozen=True)
class WellRecord:
    """Soil thickness at a well: exact (``eq``) or a lower bound (``ge``)."""

    location: tuple[float, float]
    depth: float
    kind: WellKind

    def __post_init__(self):
        kind = self.kind if isinstance(self.kind, WellKind) else WellKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "location", (float(self.location[0]), float(self.location[1])))
        if not np.isfinite(self.depth):
            raise ValueError("well depth must be finite")
        if self.depth < 0:
            raise ValueError(f"negative well depth {self.depth}")

    @property
    def is_equality(self) -> bool:
        return self.kind is WellKind.EQUALITY


@dataclass(frozen=True)
class FitResult:
    """Optimal weights and diagnostics.

    ``active_constraints`` holds labels ``eq:i``, ``ge:i``, ``lower:j`` and
    ``upper:j`` (well or weight index) of the constraints in the final
    working set; ``multipliers`` maps the same labels to their multipliers.
    """

    weights: np.ndarray
    objective: float
    active_constraints: tuple[str, ...]
    multipliers: dict
    residuals: np.ndarray
    kkt_residual: float
    iterations: int
    surface: SurfaceField | None = field(default=None, repr=False)


def loads_at_wells(wells: Sequence[WellRecord], sigma: float = SIGMA,
                   eq_bounds=EQ_BOUNDS, ge_bounds=GE_BOUNDS) -> list[GaussianLoad]:
    """One load per well centred at it, bounds chosen by the well kind."""
    out = []
    for w in wells:
        lo, hi = eq_bounds if w.is_equality else ge_bounds
        out.append(GaussianLoad(w.location, sigma, lo, hi))
    return out


def basis_responses(op: BiharmonicOperator, loads: Sequence[GaussianLoad]) -> list[SurfaceField]:
    """Clamped responses to each load with zero boundary data."""
    if not loads:
        raise ValueError("at least one load is required")
    R = np.column_stack([assemble_gaussian_load(op.grid, [q]) for q in loads])
    C = solve_homogeneous_many(op, R)
    return [SurfaceField.from_coefficients(op, C[:, j]) for j in range(C.shape[1])]


def response_matrix(responses: Sequence[SurfaceField], points) -> np.ndarray:
    """``G[i, j]`` is response ``j`` at point ``i``."""
    return np.array([[evaluate_at(u, p) for u in responses] for p in points], dtype=float).reshape(
        len(points), len(responses))


def compose_surface(p, responses: Sequence[SurfaceField], u_bc: SurfaceField | None = None) -> SurfaceField:
    """Weighted sum of the responses plus ``u_bc``."""
    p = np.asarray(p, dtype=float)
    if len(p) != len(responses):
        raise ValueError(f"{len(p)} weights for {len(responses)} responses")
    if not responses:
        raise ValueError("no responses")
    grid = responses[0].grid
    vals = np.zeros(grid.shape)
    for pj, u in zip(p, responses):
        vals = vals + pj * u.values
    if u_bc is not None:
        vals = vals + u_bc.values
    return SurfaceField(grid, vals)


def _constraints(G, t, wells, lower, upper):
    """Equality block and ``>=`` inequality rows with their labels."""
    eq = [i for i, w in enumerate(wells) if w.is_equality]
    ge = [i for i, w in enumerate(wells) if not w.is_equality]
    n = G.shape[1]
    rows, rhs, labels = [G[i] for i in ge], [t[i] for i in ge], [f"ge:{i}" for i in ge]
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(lower[j]):
            rows.append(eye[j]); rhs.append(lower[j]); labels.append(f"lower:{j}")
        if np.isfinite(upper[j]):
            rows.append(-eye[j]); rhs.append(-upper[j]); labels.append(f"upper:{j}")
    Aeq = G[eq].reshape(len(eq), n)
    beq = t[eq]
    Ain = np.array(rows, dtype=float).reshape(len(rows), n)
    bin_ = np.array(rhs, dtype=float)
    return Aeq, beq, [f"eq:{i}" for i in eq], Ain, bin_, labels


def _feasible_start(Aeq, beq, eq_labels, Ain, bin_, in_labels, lower, upper, tol):
    """A feasible point from an elastic LP; raises with the violated constraints.

    The box is kept hard so that violations are attributed to wells.
    """
    n = Aeq.shape[1]
    wells = [r for r, lab in enumerate(in_labels) if lab.startswith("ge:")]
    Ain, bin_, in_labels = Ain[wells], bin_[wells], [in_labels[r] for r in wells]
    m_e, m_i = len(beq), len(bin_)
    # variables: p (free), s_e+ , s_e-, s_i  (slacks >= 0)
    nv = n + 2 * m_e + m_i
    cost = np.concatenate([np.zeros(n), np.ones(2 * m_e + m_i)])
    A_eq = np.hstack([Aeq, np.eye(m_e), -np.eye(m_e), np.zeros((m_e, m_i))]) if m_e else None
    A_ub = np.hstack([-Ain, np.zeros((m_i, 2 * m_e)), -np.eye(m_i)]) if m_i else None
    box = [(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in zip(lower, upper)]
    bounds = box + [(0, None)] * (nv - n)
    res = linprog(cost, A_ub=A_ub, b_ub=-bin_ if m_i else None, A_eq=A_eq,
                  b_eq=beq if m_e else None, bounds=bounds, method="highs")
    if res.status != 0:
        raise InfeasibleError(f"feasibility problem failed: {res.message}")
    slack = res.x[n:]
    viol_e = slack[:m_e] + slack[m_e:2 * m_e]
    viol_i = slack[2 * m_e:]
    scale = 1.0 + max(np.abs(beq).max(initial=0.0), np.abs(bin_).max(initial=0.0))
    violated = [lab for lab, v in zip(eq_labels, viol_e) if v > tol * scale]
    violated += [lab for lab, v in zip(in_labels, viol_i) if v > tol * scale]
    if violated:
        raise InfeasibleError("constraints cannot be met within the weight bounds: "
                              + ", ".join(violated), violated)
    return res.x[:n]


def _min_norm_solve(M, r, ref):
    """Minimum-norm least squares with singular values cut relative to ``ref``.

    Cutting relative to ``M`` itself would amplify roundoff when ``M`` is a
    nearly null projection of the response matrix.
    """
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > max(M.shape) * np.finfo(float).eps * ref
    return Vt[keep].T @ ((U[:, keep].T @ r) / s[keep])


def fit_weights(
    G: np.ndarray,
    wells: Sequence[WellRecord],
    lower=None,
    upper=None,
    u_bc_at_wells=None,
    tol: float = TOL_EQ,
    max_iter: int | None = None,
) -> FitResult:
    """Solve the bound-constrained least-squares problem for the weights.

    Parameters
    ----------
    G : ndarray, shape (n_wells, n_q)
        Basis responses at the wells.
    wells : sequence of WellRecord
    lower, upper : array_like, optional
        Weight bounds; ``None`` or infinite entries mean unbounded.
    u_bc_at_wells : array_like, optional
        Boundary-data surface at the wells (zero if omitted).
    tol : float
        Equality tolerance, in depth units.

    Raises
    ------
    InfeasibleError
        The equality and inequality constraints cannot be met inside the box.

    Notes
    -----
    Primal active-set iteration.  Equalities stay in every working set; each
    step minimises the objective on the null space of the working
    constraints with a minimum-norm least-squares solve, so a singular
    Hessian is harmless.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    m, n = G.shape
    if m != len(wells) or m == 0:
        raise ValueError(f"response matrix has {m} rows for {len(wells)} wells")
    d = np.array([w.depth for w in wells], dtype=float)
    ubc = np.zeros(m) if u_bc_at_wells is None else np.asarray(u_bc_at_wells, dtype=float)
    t = d - ubc
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")

    Aeq, beq, eq_labels, Ain, bin_, in_labels = _constraints(G, t, wells, lower, upper)
    p = _feasible_start(Aeq, beq, eq_labels, Ain, bin_, in_labels, lower, upper, tol * 1e-3)
    p = np.clip(p, lower, upper)

    work: list[int] = []
    g_norm = np.linalg.norm(G, 2)
    max_iter = max_iter or 50 * (n + len(bin_) + 1)
    feas_tol = 1e-12 * (1.0 + np.abs(t).max())
    for it in range(1, max_iter + 1):
        AW = np.vstack([Aeq, Ain[work]]) if work else Aeq
        Z = null_space(AW) if AW.shape[0] else np.eye(n)
        step = np.zeros(n)
        if Z.shape[1]:
            step = Z @ _min_norm_solve(G @ Z, t - G @ p, g_norm)
        grad = G.T @ (G @ p - t)
        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(p)):
            lam = np.linalg.lstsq(AW.T, grad, rcond=None)[0] if AW.shape[0] else np.zeros(0)
            lam_in = lam[len(beq):]
            if not work or lam_in.min() >= -1e-10 * (1.0 + np.abs(grad).max()):
                break
            work.pop(int(np.argmin(lam_in)))
            continue
        alpha, block = 1.0, None
        slope = Ain @ step
        gap = Ain @ p - bin_
        for r in range(len(bin_)):
            if r in work or slope[r] >= -1e-15:
                continue
            a = max(gap[r], 0.0) / -slope[r]
            if a < alpha:
                alpha, block = a, r
        p = p + alpha * step
        if block is not None:
            work.append(block)
    else:
        raise RuntimeError(f"active-set iteration did not converge in {max_iter} steps")

    p = np.clip(p, lower, upper)
    AW = np.vstack([Aeq, Ain[work]]) if work else Aeq
    grad = G.T @ (G @ p - t)
    lam = np.linalg.lstsq(AW.T, grad, rcond=None)[0] if AW.shape[0] else np.zeros(0)
    kkt = float(np.abs(grad - AW.T @ lam).max()) if AW.shape[0] else float(np.abs(grad).max())
    labels = eq_labels + [in_labels[r] for r in work]
    resid = G @ p + ubc - d
    bad_eq = [lab for lab, r in zip(eq_labels, Aeq @ p - beq) if abs(r) > tol]
    bad_in = [lab for lab, g in zip(in_labels, Ain @ p - bin_) if g < -max(tol, feas_tol)]
    if bad_eq or bad_in:
        raise InfeasibleError("constraints violated after optimisation: " + ", ".join(bad_eq + bad_in),
                              bad_eq + bad_in)
    return FitResult(p, float(np.sum(resid ** 2)), tuple(labels), dict(zip(labels, map(float, lam))),
                     resid, kkt, it)


def fit_load(
    op: BiharmonicOperator,
    wells: Sequence[WellRecord],
    sigma: float = SIGMA,
    eq_bounds=EQ_BOUNDS,
    ge_bounds=GE_BOUNDS,
    use_bounds: bool = True,
    u_bc: SurfaceField | None = None,
) -> tuple[FitResult, list[GaussianLoad], list[SurfaceField]]:
    """Full pipeline: one load per well, responses, weights and surface."""
    if not wells:
        raise ValueError("at least one well is required")
    loads = loads_at_wells(wells, sigma, eq_bounds, ge_bounds)
    responses = basis_responses(op, loads)
    pts = [w.location for w in wells]
    G = response_matrix(responses, pts)
    ubc = None if u_bc is None else np.array([evaluate_at(u_bc, x) for x in pts])
    lower = np.array([q.lower for q in loads]) if use_bounds else None
    upper = np.array([q.upper for q in loads]) if use_bounds else None
    res = fit_weights(G, wells, lower, upper, ubc)
    surface = compose_surface(res.weights, responses, u_bc)
    return FitResult(res.weights, res.objective, res.active_constraints, res.multipliers,
                     res.residuals, res.kkt_residual, res.iterations, surface), loads, responses
