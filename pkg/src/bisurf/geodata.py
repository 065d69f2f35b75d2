"""Raster, well-table, polyline and VTK input/output plus the soil algebra.

Rasters follow the ESRI ASCII grid layout with north-up rows.  A raster
and a grid correspond cell-centre to node: the node ``(j, i)`` of a grid with
``nrows`` rows is the raster cell in row ``nrows - 1 - j``, column ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .assembly import SurfaceField
from .errors import FormatError
from .grid import MaskedGrid, Polyline, build_grid
from .loadfit import WellKind, WellRecord

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value")
DEFAULT_NODATA = -9999.0


@dataclass(frozen=True)
class Raster:
    """North-up raster; ``values[0]`` is the northern row.

    ``values`` holds NaN where the file holds the NODATA sentinel.
    """

    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata_value: float = DEFAULT_NODATA
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.cellsize > 0:
            raise FormatError(f"cellsize must be positive, got {self.cellsize}")
        v = np.array(self.values, dtype=float)
        if v.shape != (self.nrows, self.ncols):
            raise FormatError(f"values shape {v.shape} != ({self.nrows}, {self.ncols})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def same_grid(self, other: "Raster") -> bool:
        return (self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize) == (
            other.ncols, other.nrows, other.xllcorner, other.yllcorner, other.cellsize)

    def with_values(self, values) -> "Raster":
        return Raster(self.ncols, self.nrows, self.xllcorner, self.yllcorner, self.cellsize,
                      self.nodata_value, values)

    @property
    def node_origin(self) -> tuple[float, float]:
        """Centre of the south-west cell."""
        return (self.xllcorner + 0.5 * self.cellsize, self.yllcorner + 0.5 * self.cellsize)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_ascii_grid(raster: Raster, path) -> None:
    """Write ``raster``; NaN cells are written as the NODATA value."""
    lines = [
        f"ncols {raster.ncols}",
        f"nrows {raster.nrows}",
        f"xllcorner {_fmt(raster.xllcorner)}",
        f"yllcorner {_fmt(raster.yllcorner)}",
        f"cellsize {_fmt(raster.cellsize)}",
        f"NODATA_value {_fmt(raster.nodata_value)}",
    ]
    nod = _fmt(raster.nodata_value)
    for row in raster.values:
        lines.append(" ".join(nod if math.isnan(v) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ascii_grid(path) -> Raster:
    """Parse an ESRI ASCII grid file with the canonical header order."""
    text = Path(path).read_text().splitlines()
    header = {}
    for n, key in enumerate(HEADER_KEYS):
        if n >= len(text):
            raise FormatError(f"{path}: missing header keyword {key!r}")
        parts = text[n].split()
        if len(parts) != 2 or parts[0].lower() != key.lower():
            raise FormatError(f"{path}:{n + 1}: expected header keyword {key!r}, got {text[n]!r}")
        if key.lower() in header:
            raise FormatError(f"{path}:{n + 1}: duplicated header keyword {key!r}")
        header[key.lower()] = parts[1]
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        xll, yll = float(header["xllcorner"]), float(header["yllcorner"])
        cs, nodata = float(header["cellsize"]), float(header["nodata_value"])
    except ValueError as exc:
        raise FormatError(f"{path}: bad header value: {exc}") from exc
    body = [(n + 1, line) for n, line in enumerate(text) if n >= len(HEADER_KEYS) and line.strip()]
    if len(body) != nrows:
        raise FormatError(f"{path}: expected {nrows} data rows, found {len(body)}")
    vals = np.empty((nrows, ncols))
    for r, (lineno, line) in enumerate(body):
        parts = line.split()
        if len(parts) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} values, found {len(parts)}")
        try:
            vals[r] = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric cell: {exc}") from exc
    vals[vals == nodata] = np.nan
    return Raster(ncols, nrows, xll, yll, cs, nodata, vals)


def raster_from_field(fld: SurfaceField, nodata: float = DEFAULT_NODATA) -> Raster:
    """Raster whose cell centres are the grid nodes; Outside nodes become NODATA."""
    g = fld.grid
    h = g.spacing
    return Raster(g.ncols, g.nrows, g.origin[0] - 0.5 * h, g.origin[1] - 0.5 * h, h, nodata,
                  np.flipud(fld.values))


def field_from_raster(raster: Raster, grid: MaskedGrid) -> SurfaceField:
    """Inverse of :func:`raster_from_field` on a matching grid."""
    if (raster.ncols, raster.nrows) != (grid.ncols, grid.nrows) or not np.isclose(raster.cellsize, grid.spacing):
        raise FormatError("raster does not match the grid")
    return SurfaceField(grid, np.flipud(raster.values))


def grid_from_raster(raster: Raster, cutouts: Sequence[Polyline] = (), dirichlet="all") -> MaskedGrid:
    """Grid with one node per raster cell centre."""
    x0, y0 = raster.node_origin
    h = raster.cellsize
    rect = (x0, y0, x0 + (raster.ncols - 1) * h, y0 + (raster.nrows - 1) * h)
    return build_grid(rect, raster.ncols - 1, cutouts, dirichlet)


def bedrock_from_soil(terrain: Raster, soil: Raster) -> Raster:
    """Cellwise ``terrain - soil``; NODATA in either input propagates."""
    if not terrain.same_grid(soil):
        raise FormatError("terrain and soil rasters are on different grids")
    return terrain.with_values(terrain.values - soil.values)


def read_wells(path) -> list[WellRecord]:
    """Read a ``x,y,depth,kind`` CSV; kind is ``eq`` or ``ge``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["x", "y", "depth", "kind"]:
            raise FormatError(f"{path}: expected header x,y,depth,kind, got {','.join(header)}")
        wells = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            kind = row[3].strip()
            if kind not in ("eq", "ge"):
                raise FormatError(f"{path}:{lineno}: unknown well kind {kind!r}")
            try:
                x, y, depth = float(row[0]), float(row[1]), float(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if depth < 0:
                raise FormatError(f"{path}:{lineno}: negative depth {depth}")
            wells.append(WellRecord((x, y), depth, WellKind(kind)))
    return wells


def write_wells(wells: Sequence[WellRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "depth", "kind"])
        for rec in wells:
            w.writerow([_fmt(rec.location[0]), _fmt(rec.location[1]), _fmt(rec.depth), rec.kind.value])


def read_polylines(path) -> list[Polyline]:
    """Read an ``id,seq,x,y,closed`` CSV; rows of one id are ordered by ``seq``."""
    groups: dict[str, list] = {}
    closed: dict[str, bool] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id", "seq", "x", "y", "closed"]:
            raise FormatError(f"{path}: expected header id,seq,x,y,closed")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            pid, flag = row[0].strip(), row[4].strip().lower()
            if flag not in ("0", "1", "true", "false"):
                raise FormatError(f"{path}:{lineno}: closed flag must be 0/1/true/false")
            try:
                item = (int(row[1]), float(row[2]), float(row[3]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            is_closed = flag in ("1", "true")
            if closed.setdefault(pid, is_closed) != is_closed:
                raise FormatError(f"{path}:{lineno}: inconsistent closed flag for polyline {pid}")
            groups.setdefault(pid, []).append(item)
    out = []
    for pid, items in groups.items():
        items.sort()
        try:
            out.append(Polyline(np.array([[x, y] for _, x, y in items]), closed[pid]))
        except ValueError as exc:
            raise FormatError(f"{path}: polyline {pid}: {exc}") from exc
    return out


def write_polylines(polylines: Sequence[Polyline], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "seq", "x", "y", "closed"])
        for pid, poly in enumerate(polylines):
            for seq, (x, y) in enumerate(poly.vertices):
                w.writerow([pid, seq, _fmt(x), _fmt(y), int(poly.closed)])


def write_vtk_structured(fld: SurfaceField, path, name: str = "u", nodata: float = DEFAULT_NODATA) -> None:
    """Legacy ASCII VTK STRUCTURED_POINTS file with one scalar per node."""
    g = fld.grid
    vals = np.where(np.isnan(fld.values), nodata, fld.values).ravel()
    lines = [
        "# vtk DataFile Version 3.0",
        f"{name} nodata={_fmt(nodata)}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.ncols} {g.nrows} 1",
        f"ORIGIN {_fmt(g.origin[0])} {_fmt(g.origin[1])} 0.0",
        f"SPACING {_fmt(g.spacing)} {_fmt(g.spacing)} 1.0",
        f"POINT_DATA {g.size}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines += [_fmt(v) for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_structured(path) -> tuple[dict, np.ndarray]:
    """Header fields and the ``(nrows, ncols)`` scalar array of a file from :func:`write_vtk_structured`."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk") or tokens[2].strip() != "ASCII":
        raise FormatError(f"{path}: not an ASCII legacy VTK file")
    meta = {}
    pos = 3
    while pos < len(tokens) and not tokens[pos].startswith("LOOKUP_TABLE"):
        parts = tokens[pos].split()
        if parts:
            meta[parts[0]] = parts[1:]
        pos += 1
    try:
        nx, ny, _ = map(int, meta["DIMENSIONS"])
        data = np.array([float(t) for t in " ".join(tokens[pos + 1:]).split()])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.size != nx * ny:
        raise FormatError(f"{path}: expected {nx * ny} scalars, found {data.size}")
    return meta, data.reshape(ny, nx)


def mask_from_raster(raster: Raster, threshold: float = 0.5) -> np.ndarray:
    """Boolean node mask in grid orientation (row 0 south) of cells above ``threshold``."""
    return np.flipud(np.nan_to_num(raster.values, nan=0.0) > threshold)
