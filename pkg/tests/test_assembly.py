from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bisurf.assembly import (
    BoundaryData,
    GaussianLoad,
    SurfaceField,
    assemble_constant_load,
    assemble_function_load,
    assemble_gaussian_load,
    assemble_operator,
    coefficients_from_function,
    evaluate_at,
    evaluation_row,
    normal_derivative_row,
    solve_forward,
    solve_forward_coefficients,
)
from bisurf.errors import ForwardProblemError, OutsideDomainError
from bisurf.geodata import read_ascii_grid
from bisurf.grid import Tag, build_grid, square_curve

DATA = Path(__file__).parent / "data"
SQUARE = (0.0, 0.0, 2.0, 2.0)


def clamped(n_x=8, rect=SQUARE, cutouts=()):
    return assemble_operator(build_grid(rect, n_x, cutouts, dirichlet="all"))


def deep_rows(op, depth=2):
    """Rows whose node is at least ``depth`` nodes from every non-Interior node."""
    g = op.grid
    keep = []
    for r, k in enumerate(op.row_nodes):
        j, i = divmod(int(k), g.ncols)
        block = g.tags[max(j - depth, 0): j + depth + 1, max(i - depth, 0): i + depth + 1]
        if block.shape == (2 * depth + 1,) * 2 and np.all(block == Tag.INTERIOR):
            keep.append(r)
    return np.array(keep)


def row_pattern(op, r):
    """Row ``r`` as ``{(dj, di): value}`` relative to its node (value columns only)."""
    g = op.grid
    j0, i0 = divmod(int(op.row_nodes[r]), g.ncols)
    row = op.matrix.getrow(r).tocoo()
    out = {}
    for c, v in zip(row.col, row.data):
        assert c < op.n_values
        j, i = divmod(int(op.value_nodes[c]), g.ncols)
        out[(j - j0, i - i0)] = v
    return out


def test_center_row_is_13_point_stencil():
    op = clamped(4, (0, 0, 4, 4))
    r = int(np.flatnonzero(op.row_nodes == op.grid.flat(2, 2))[0])
    pat = row_pattern(op, r)
    assert len(pat) == 13
    assert pat[(0, 0)] == 20
    assert all(pat[d] == -8 for d in ((0, 1), (0, -1), (1, 0), (-1, 0)))
    assert all(pat[d] == 2 for d in ((1, 1), (1, -1), (-1, 1), (-1, -1)))
    assert all(pat[d] == 1 for d in ((0, 2), (0, -2), (2, 0), (-2, 0)))


def test_entries_scale_as_h_minus_4():
    a, b = clamped(8), clamped(16)
    ra, rb = deep_rows(a)[0], deep_rows(b)[0]
    assert row_pattern(b, rb)[(0, 0)] / row_pattern(a, ra)[(0, 0)] == 16.0
    assert a.matrix[ra].nnz == 13


def test_near_boundary_rows_carry_derivative_columns():
    op = clamped(8)
    assert op.matrix.shape == (49, 109)
    assert len(op.derivative_dofs) == 28
    r = int(np.flatnonzero(op.row_nodes == op.grid.flat(1, 1))[0])
    cols = op.matrix.getrow(r).indices
    assert np.any(cols >= op.n_values)


@pytest.mark.parametrize(
    "u, expected",
    [
        (lambda x, y: x**4, 24.0),
        (lambda x, y: y**4, 24.0),
        (lambda x, y: x**2 * y**2, 8.0),
        (lambda x, y: x**4 + y**4, 48.0),
    ],
)
def test_stencil_exact_on_quartics(u, expected):
    op = clamped(16)
    c = coefficients_from_function(op, u)
    out = (op.matrix @ c)[deep_rows(op)]
    assert np.allclose(out, expected, rtol=1e-8, atol=0)


def test_ghost_elimination_exact_for_quadratics():
    # central-difference slopes are exact for quadratics, so every row vanishes
    op = clamped(8, cutouts=[square_curve((1.0, 1.0), 0.25)])
    u = lambda x, y: x**2 - 3 * x * y + 2 * y**2 + x
    grad = lambda x, y: (2 * x - 3 * y + 1, -3 * x + 4 * y)
    c = coefficients_from_function(op, u, grad)
    assert np.abs(op.matrix @ c).max() < 1e-9


def test_gaussian_load_values():
    g = build_grid(SQUARE, 8, dirichlet="all")
    rhs = assemble_gaussian_load(g, [GaussianLoad((1.0, 1.0), 1.0)])
    op = assemble_operator(g)
    r = int(np.flatnonzero(op.row_nodes == g.flat(4, 4))[0])
    assert np.isclose(rhs[r], 1 / np.sqrt(2 * np.pi))
    assert np.array_equal(assemble_gaussian_load(g, []), np.zeros(op.n_rows))
    load = GaussianLoad((10.0, 5.0), 1.5)
    assert np.isclose(load(13.0, 5.0), np.exp(-2) / (1.5 * np.sqrt(2 * np.pi)), rtol=1e-12)
    assert np.isclose(load(13.0, 5.0), 0.03599, atol=5e-6)


def test_gaussian_load_rejects():
    g = build_grid(SQUARE, 8, dirichlet="all")
    with pytest.raises(OutsideDomainError, match="load 1"):
        assemble_gaussian_load(g, [GaussianLoad((1, 1), 1.0), GaussianLoad((5, 1), 1.0)])
    with pytest.raises(ValueError):
        GaussianLoad((1, 1), 0.0)
    with pytest.raises(ValueError):
        GaussianLoad((1, 1), 1.0, lower=2, upper=1)


def test_zero_problem_gives_zero():
    op = clamped(8)
    u = solve_forward(op, np.zeros(op.n_rows))
    assert np.array_equal(u.values, np.zeros((9, 9)))


def test_forward_matches_golden():
    op = clamped(8)
    u = solve_forward(op, assemble_constant_load(op.grid, 0.1))
    golden = np.flipud(read_ascii_grid(DATA / "forward_q0.1_nx8.asc").values)
    assert np.abs(u.values - golden).max() <= 1e-9 * np.abs(golden).max()


def test_forward_residual_and_exact_boundary():
    op = clamped(8, cutouts=[square_curve((1.0, 1.0), 0.25)])
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal(op.n_rows)
    bc = BoundaryData.from_functions(op, lambda x, y: np.sin(x) + y, lambda x, y: (np.cos(x), 1.0))
    c = solve_forward_coefficients(op, rhs, bc)
    assert np.abs(op.matrix @ c - rhs).max() <= 1e-8 * (1 + np.abs(rhs).max())
    assert np.array_equal(c[op.known_cols], bc.known_vector(op))


def test_forward_linearity_in_load():
    op = clamped(8)
    rhs = assemble_gaussian_load(op.grid, [GaussianLoad((0.7, 1.2), 0.5)])
    u1 = solve_forward(op, rhs).values
    u2 = solve_forward(op, 3.7 * rhs).values
    assert np.allclose(u2, 3.7 * u1, rtol=1e-10, atol=0)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_forward_joint_linearity(seed):
    op = clamped(8, cutouts=[square_curve((1.0, 1.0), 0.25)])
    rng = np.random.default_rng(seed)

    def random_data():
        rhs = rng.standard_normal(op.n_rows)
        f = {k: rng.standard_normal() for k in op.value_nodes[op.boundary_value_cols]}
        h = {key: rng.standard_normal() for key in op.derivative_dofs}
        return rhs, BoundaryData({int(k): v for k, v in f.items()}, h)

    (q1, b1), (q2, b2) = random_data(), random_data()
    b12 = BoundaryData({k: b1.f[k] + b2.f[k] for k in b1.f}, {k: b1.h[k] + b2.h[k] for k in b1.h})
    lhs = solve_forward(op, q1 + q2, b12).values
    rhs = solve_forward(op, q1, b1).values + solve_forward(op, q2, b2).values
    scale = np.nanmax(np.abs(rhs))
    assert np.nanmax(np.abs(lhs - rhs)) <= 1e-9 * scale


def test_dihedral_symmetry_of_centred_load():
    op = clamped(10)
    u = solve_forward(op, assemble_gaussian_load(op.grid, [GaussianLoad((1.0, 1.0), 0.4)])).values
    tol = 1e-9 * np.abs(u).max()
    for v in (u.T, np.flipud(u), np.fliplr(u), np.rot90(u), np.rot90(u, 2), np.rot90(u, 3), np.flipud(u.T)):
        assert np.abs(v - u).max() <= tol


def lin(x, y):
    return 1.0 + 0.3 * x - 0.7 * y


@pytest.mark.parametrize("dirichlet", [["left"], ["left", "bottom"], "none"])
def test_natural_rows_annihilate_linear_fields(dirichlet):
    # includes the zero-twist rows where two natural edges meet
    op = assemble_operator(build_grid(SQUARE, 8, dirichlet=dirichlet))
    c = coefficients_from_function(op, lin, lambda x, y: (0.3, -0.7))
    assert np.abs(op.matrix @ c).max() < 1e-10


def test_natural_edges_reproduce_linear_field():
    g = build_grid(SQUARE, 8, dirichlet=["left", "right"])
    op = assemble_operator(g)
    bc = BoundaryData.from_functions(op, lin, lambda x, y: (0.3, -0.7))
    u = solve_forward(op, np.zeros(op.n_rows), bc)
    X, Y = g.coordinates()
    assert np.abs(u.values - lin(X, Y)).max() < 1e-7


@pytest.mark.parametrize(
    "dirichlet, n_x",
    [("none", 8), (["left"], 8), (["left", "bottom"], 8), (["left", "right"], 16)],
)
def test_singular_forward_problems_are_reported(dirichlet, n_x):
    op = assemble_operator(build_grid(SQUARE, n_x, dirichlet=dirichlet))
    with pytest.raises(ForwardProblemError, match="not well-posed"):
        solve_forward(op, np.zeros(op.n_rows))


def test_forward_rejects_wrong_rhs_length():
    op = clamped(8)
    with pytest.raises(ValueError):
        solve_forward(op, np.zeros(op.n_rows + 1))


def manufactured_error(n_x):
    s, c = np.sin, np.cos
    pi = np.pi
    g = build_grid((0, 0, 1, 1), n_x, dirichlet="all")
    op = assemble_operator(g)
    rhs = assemble_function_load(g, lambda x, y: 4 * pi**4 * s(pi * x) * s(pi * y))
    bc = BoundaryData.from_functions(
        op, lambda x, y: s(pi * x) * s(pi * y),
        lambda x, y: (pi * c(pi * x) * s(pi * y), pi * s(pi * x) * c(pi * y)))
    u = solve_forward(op, rhs, bc)
    X, Y = g.coordinates()
    return np.abs(u.values - s(pi * X) * s(pi * Y)).max()


def test_forward_convergence_order():
    e16, e32 = manufactured_error(16), manufactured_error(32)
    assert np.log2(e16 / e32) >= 1.8


def test_evaluate_at_examples():
    g = build_grid(SQUARE, 8, dirichlet="all")
    X, Y = g.coordinates()
    lin = SurfaceField(g, X + 2 * Y)
    rng = np.random.default_rng(0)
    for p in rng.uniform(0, 2, (20, 2)):
        assert abs(evaluate_at(lin, p) - (p[0] + 2 * p[1])) < 1e-12
    vals = np.zeros(g.shape)
    vals[3, 3] = 4.0
    f = SurfaceField(g, vals)
    assert evaluate_at(f, (0.625, 0.625)) == 1.0
    assert evaluate_at(f, (0.75, 0.75)) == 4.0


def test_evaluate_outside_raises():
    g = build_grid(SQUARE, 8, [square_curve((1.0, 1.0), 0.25)], dirichlet="all")
    f = SurfaceField(g, np.ones(g.shape))
    assert np.isnan(f.values[4, 4])
    with pytest.raises(OutsideDomainError):
        evaluate_at(f, (1.0, 1.0))


def test_evaluation_row_at_node_is_unit_row():
    op = clamped(8)
    row = evaluation_row(op, (0.5, 0.75))
    assert row.nnz == 1 and row.data[0] == 1.0
    assert row.indices[0] == op.node_col[op.grid.flat(3, 2)]


@settings(max_examples=30)
@given(st.floats(0, 2), st.floats(0, 2))
def test_evaluation_row_matches_evaluate_at(x, y):
    op = clamped(8)
    rng = np.random.default_rng(0)
    c = rng.standard_normal(op.n_cols)
    f = SurfaceField.from_coefficients(op, c)
    row = evaluation_row(op, (x, y))
    assert np.isclose((row @ c).item(), evaluate_at(f, (x, y)), rtol=1e-12, atol=1e-12)
    assert np.isclose(row.sum(), 1.0)


def test_normal_derivative_row_exact_for_linears():
    lin = lambda x, y: x + 0 * y
    for dirichlet in ("all", "none"):
        op = assemble_operator(build_grid(SQUARE, 8, dirichlet=dirichlet))
        c = coefficients_from_function(op, lin, lambda x, y: (1.0, 0.0))
        row = normal_derivative_row(op, (2.0, 1.0), (1.0, 0.0))
        assert abs((row @ c).item() - 1.0) < 1e-10


def test_normal_derivative_row_second_order():
    u = lambda x, y: np.sin(1.3 * x) * np.cos(0.8 * y)
    errs = []
    for n_x in (8, 16):
        op = clamped(n_x)
        h = op.grid.spacing
        c = coefficients_from_function(op, u)
        f = SurfaceField.from_coefficients(op, c)
        p = np.array([1.0 + h / 2, 0.8 + h / 2 * 0])  # midway between nodes in x
        row = normal_derivative_row(op, p, (1.0, 0.0))
        step = h / 10
        fd = (evaluate_at(f, p + (step, 0)) - evaluate_at(f, p - (step, 0))) / (2 * step)
        errs.append(abs((row @ c).item() - fd))
        assert errs[-1] <= h**2
    assert errs[1] < errs[0]
