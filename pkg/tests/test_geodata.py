from pathlib import Path

import meshio
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bisurf.assembly import SurfaceField, assemble_constant_load, assemble_operator, solve_forward
from bisurf.errors import FormatError
from bisurf.geodata import (
    Raster,
    bedrock_from_soil,
    field_from_raster,
    grid_from_raster,
    mask_from_raster,
    raster_from_field,
    read_ascii_grid,
    read_polylines,
    read_vtk_structured,
    read_wells,
    write_ascii_grid,
    write_polylines,
    write_vtk_structured,
    write_wells,
)
from bisurf.grid import MaskedGrid, Polyline, Tag, build_grid, square_curve
from bisurf.loadfit import WellKind, WellRecord

DATA = Path(__file__).parent / "data"
HEADER = "ncols {c}\nnrows {r}\nxllcorner 0.0\nyllcorner 0.0\ncellsize 1.0\nNODATA_value -9999\n"


def _small_grid(nrows, ncols):
    return MaskedGrid((0.0, 0.0), 1.0, ncols, nrows, np.full((nrows, ncols), Tag.INTERIOR))


def _raster(values, **kw):
    v = np.asarray(values, dtype=float)
    args = dict(ncols=v.shape[1], nrows=v.shape[0], xllcorner=0.0, yllcorner=0.0, cellsize=1.0)
    args.update(kw)
    return Raster(values=v, **args)


def test_read_2x2(tmp_path):
    p = tmp_path / "a.asc"
    p.write_text(HEADER.format(c=2, r=2) + "1 2\n3 4\n")
    r = read_ascii_grid(p)
    assert (r.ncols, r.nrows, r.cellsize, r.nodata_value) == (2, 2, 1.0, -9999.0)
    assert r.values.tolist() == [[1, 2], [3, 4]]


def test_random_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    r = _raster(rng.normal(size=(10, 10)) * 1e3, xllcorner=123.456, yllcorner=-7.0, cellsize=0.1)
    write_ascii_grid(r, tmp_path / "r.asc")
    back = read_ascii_grid(tmp_path / "r.asc")
    assert back.values.tobytes() == r.values.tobytes()
    assert back.same_grid(r)
    write_ascii_grid(back, tmp_path / "s.asc")
    assert (tmp_path / "r.asc").read_bytes() == (tmp_path / "s.asc").read_bytes()


@settings(max_examples=25)
@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False)))
def test_round_trip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "r.asc"
    values = np.where(values == -9999.0, 0.0, values)
    write_ascii_grid(_raster(values), path)
    assert read_ascii_grid(path).values.tobytes() == _raster(values).values.tobytes()


def test_nodata_round_trip(tmp_path):
    r = _raster([[1.0, np.nan], [np.nan, 4.0]])
    write_ascii_grid(r, tmp_path / "n.asc")
    text = (tmp_path / "n.asc").read_text().splitlines()
    assert text[6] == "1.0 -9999.0"
    back = read_ascii_grid(tmp_path / "n.asc")
    assert np.array_equal(np.isnan(back.values), np.isnan(r.values))


def test_header_order_is_canonical(tmp_path):
    write_ascii_grid(_raster([[0.0]]), tmp_path / "h.asc")
    keys = [line.split()[0] for line in (tmp_path / "h.asc").read_text().splitlines()[:6]]
    assert keys == ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value"]


def test_row_length_mismatch_names_line(tmp_path):
    p = tmp_path / "bad.asc"
    p.write_text(HEADER.format(c=3, r=2) + "1 2 3\n1 2 3 4\n")
    with pytest.raises(FormatError, match=r"bad\.asc:8: expected 3 values, found 4"):
        read_ascii_grid(p)


@pytest.mark.parametrize(
    "text, match",
    [
        ("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n", "missing header"),
        ("ncols 2\nncols 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value 0\n1 2\n", "nrows"),
        ("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 0\nNODATA_value 0\n1 2\n", "cellsize"),
        ("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value 0\n1 2\n", "data rows"),
        ("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value 0\n1 x\n", "non-numeric"),
        ("ncols two\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value 0\n1 2\n", "bad header"),
    ],
)
def test_header_and_body_errors(tmp_path, text, match):
    p = tmp_path / "e.asc"
    p.write_text(text)
    with pytest.raises(FormatError, match=match):
        read_ascii_grid(p)


def test_raster_field_orientation():
    g = _small_grid(2, 3)
    vals = np.arange(g.size, dtype=float).reshape(g.shape)
    r = raster_from_field(SurfaceField(g, vals))
    # the northern row comes first in the raster
    assert r.values[0].tolist() == vals[-1].tolist()
    assert (r.xllcorner, r.yllcorner, r.cellsize) == (-0.5, -0.5, 1.0)
    assert np.array_equal(field_from_raster(r, g).values, vals)
    big = _raster(np.zeros((5, 9)), xllcorner=-0.5, yllcorner=-0.5)
    g2 = grid_from_raster(big)
    assert g2.origin == (0.0, 0.0) and g2.shape == (5, 9)
    with pytest.raises(FormatError):
        field_from_raster(r, build_grid((0, 0, 4, 4), 4))


def test_mask_from_raster_orientation():
    r = _raster([[1, 0], [0, np.nan]])
    assert mask_from_raster(r).tolist() == [[False, False], [True, False]]


def test_bedrock_from_soil_examples():
    terrain = _raster(np.full((3, 4), 10.0))
    assert np.array_equal(bedrock_from_soil(terrain, terrain.with_values(np.zeros((3, 4)))).values,
                          terrain.values)
    assert np.all(bedrock_from_soil(terrain, terrain.with_values(np.full((3, 4), 4.0))).values == 6.0)
    with pytest.raises(FormatError):
        bedrock_from_soil(terrain, _raster(np.zeros((3, 4)), cellsize=2.0))


def test_bedrock_from_soil_nodata_propagates():
    t = _raster([[1.0, np.nan]])
    s = t.with_values([[np.nan, 0.0]])
    assert np.all(np.isnan(bedrock_from_soil(t, s).values))


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_bedrock_soil_identities(seed):
    rng = np.random.default_rng(seed)
    m = _raster(rng.uniform(-500, 2000, (5, 7)))
    s = m.with_values(rng.uniform(0, 30, (5, 7)))
    b = bedrock_from_soil(m, s)
    assert np.max(np.abs(b.values + s.values - m.values)) <= 1e-12 * np.max(np.abs(m.values))
    inverse = bedrock_from_soil(m, m.with_values(m.values - b.values))
    assert np.allclose(inverse.values, b.values, rtol=0, atol=1e-12 * np.max(np.abs(m.values)))


def test_wells_example_row(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("x,y,depth,kind\n1.0,2.0,5.5,eq\n")
    (w,) = read_wells(p)
    assert w.location == (1.0, 2.0) and w.depth == 5.5 and w.kind is WellKind.EQUALITY


def test_wells_header_only(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("x,y,depth,kind\n")
    assert read_wells(p) == []


@pytest.mark.parametrize(
    "body, match",
    [
        ("1,2,3,gt\n", "unknown well kind"),
        ("1,2,-3,eq\n", "negative depth"),
        ("1,2,3\n", "expected 4 fields"),
        ("1,a,3,eq\n", "w.csv:2"),
    ],
)
def test_wells_errors(tmp_path, body, match):
    p = tmp_path / "w.csv"
    p.write_text("x,y,depth,kind\n" + body)
    with pytest.raises(FormatError, match=match):
        read_wells(p)


def test_wells_bad_header_and_empty(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("x,y,d,kind\n")
    with pytest.raises(FormatError, match="header"):
        read_wells(p)
    p.write_text("")
    with pytest.raises(FormatError, match="empty"):
        read_wells(p)


def test_wells_round_trip_preserves_order(tmp_path):
    rng = np.random.default_rng(2)
    wells = [WellRecord(tuple(rng.uniform(0, 10, 2)), float(rng.uniform(0, 5)), rng.choice(["eq", "ge"]))
             for _ in range(20)]
    write_wells(wells, tmp_path / "w.csv")
    assert read_wells(tmp_path / "w.csv") == wells


def test_polylines_round_trip(tmp_path):
    polys = [square_curve((1.0, 2.0), 0.5), Polyline([(0.1, 0.2), (3.0, 1.0 / 3.0), (5.0, 5.0)])]
    write_polylines(polys, tmp_path / "p.csv")
    back = read_polylines(tmp_path / "p.csv")
    assert [p.closed for p in back] == [True, False]
    for a, b in zip(polys, back):
        assert np.array_equal(a.vertices, b.vertices)


def test_polylines_sorted_by_seq_and_errors(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("id,seq,x,y,closed\na,1,1,0,0\na,0,0,0,0\n")
    (poly,) = read_polylines(p)
    assert poly.vertices.tolist() == [[0, 0], [1, 0]]
    p.write_text("id,seq,x,y,closed\na,0,0,0,0\na,1,1,0,1\n")
    with pytest.raises(FormatError, match="inconsistent"):
        read_polylines(p)
    p.write_text("id,seq,x,y\n")
    with pytest.raises(FormatError, match="header"):
        read_polylines(p)
    p.write_text("id,seq,x,y,closed\na,0,0,0,yes\n")
    with pytest.raises(FormatError, match="closed flag"):
        read_polylines(p)


def _meshio_values(path, name):
    mesh = meshio.read(path, file_format="vtk")
    return mesh.points, np.asarray(mesh.point_data[name]).ravel()


def test_vtk_round_trip_3x3_via_meshio(tmp_path):
    g = _small_grid(3, 3)
    vals = np.arange(9, dtype=float).reshape(3, 3) / 7.0
    write_vtk_structured(SurfaceField(g, vals), tmp_path / "f.vtk", name="u")
    pts, data = _meshio_values(tmp_path / "f.vtk", "u")
    assert np.array_equal(data, vals.ravel())
    # x varies fastest, matching the flat node index
    assert np.allclose(pts[:3, :2], [[0, 0], [1, 0], [2, 0]])
    meta, arr = read_vtk_structured(tmp_path / "f.vtk")
    assert meta["DIMENSIONS"] == ["3", "3", "1"] and np.array_equal(arr, vals)


def test_vtk_zero_field(tmp_path):
    g = _small_grid(3, 3)
    write_vtk_structured(SurfaceField(g, np.zeros((3, 3))), tmp_path / "z.vtk")
    _, data = _meshio_values(tmp_path / "z.vtk", "u")
    assert np.all(data == 0.0)


def test_vtk_outside_nodes_use_nodata(tmp_path):
    g = build_grid((0, 0, 2, 2), 8, [square_curve((1.0, 1.0), 0.25)], dirichlet="all")
    vals = np.ones(g.shape)
    vals[g.tags == 0] = np.nan
    write_vtk_structured(SurfaceField(g, vals), tmp_path / "o.vtk", nodata=-1.0)
    _, arr = read_vtk_structured(tmp_path / "o.vtk")
    assert arr[4, 4] == -1.0 and (arr == -1.0).sum() == 1


def test_vtk_forward_solution_matches_golden(tmp_path):
    op = assemble_operator(build_grid((0, 0, 2, 2), 8, dirichlet="all"))
    u = solve_forward(op, assemble_constant_load(op.grid, 0.1))
    write_vtk_structured(u, tmp_path / "fwd.vtk", name="u")
    _, data = _meshio_values(tmp_path / "fwd.vtk", "u")
    golden = np.flipud(read_ascii_grid(DATA / "forward_q0.1_nx8.asc").values)
    assert np.max(np.abs(data.reshape(9, 9) - golden)) <= 1e-9 * np.max(np.abs(golden))


def test_read_vtk_rejects_other_files(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\nworld\nBINARY\n")
    with pytest.raises(FormatError):
        read_vtk_structured(p)
