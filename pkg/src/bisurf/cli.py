"""Command-line front end.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .assembly import assemble_constant_load, assemble_operator, solve_forward
from .bedrock import reconstruct_bedrock
from .config import OUT_ENV, ConfigError, RunConfig, load_config
from .errors import BisurfError, ForwardProblemError, InfeasibleError, LCurveError
from .geodata import (
    raster_from_field,
    read_ascii_grid,
    read_polylines,
    read_wells,
    write_ascii_grid,
    write_polylines,
    write_vtk_structured,
    write_wells,
)
from .grid import build_grid
from .inverse import (
    Svd,
    boundary_residual,
    extract_boundary_values,
    lcurve_corner,
    norms_curve,
    tsvd_solve,
)
from .loadfit import fit_load
from .synthetic import add_relative_noise, condition_sweep, synthetic_problem

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (ForwardProblemError, LCurveError, InfeasibleError, np.linalg.LinAlgError)


def fmt(x) -> str:
    """Fixed nine-significant-digit rendering used in every CSV and report."""
    return f"{float(x):.8e}"


class Outputs:
    """Collects output files and writes them together at the end of a run."""

    def __init__(self, directory: Path):
        self.dir = Path(directory)
        self.files: dict[str, object] = {}

    def csv(self, name: str, header: list[str], rows) -> None:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer))
                                  else fmt(v) for v in row))
        self.files[name] = "\n".join(lines) + "\n"

    def text(self, name: str, items: dict) -> None:
        lines = []
        for key, v in items.items():
            if isinstance(v, (float, np.floating)):
                v = fmt(v)
            lines.append(f"{key}: {v}")
        self.files[name] = "\n".join(lines) + "\n"

    def call(self, filename: str, writer, obj, **kwargs) -> None:
        self.files[filename] = (writer, obj, kwargs)

    def flush(self) -> list[Path]:
        self.dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, content in self.files.items():
            path = self.dir / name
            if isinstance(content, str):
                path.write_text(content)
            else:
                writer, obj, kwargs = content
                writer(obj, path, **kwargs)
            written.append(path)
        return written


def _grid(cfg: RunConfig):
    cutouts = read_polylines(cfg.path(cfg.cutouts)) if cfg.cutouts else []
    return build_grid(cfg.rect, cfg.n_x, cutouts, cfg.dirichlet)


def cmd_forward(cfg: RunConfig, out: Outputs) -> dict:
    """Clamped forward solve with the constant load ``q`` and zero boundary data."""
    grid = _grid(cfg)
    op = assemble_operator(grid)
    fld = solve_forward(op, assemble_constant_load(grid, cfg.q))
    out.call("surface.asc", write_ascii_grid, raster_from_field(fld))
    out.call("surface.vtk", write_vtk_structured, fld)
    summary = {"command": "forward", "nodes": grid.size, "unknowns": len(op.unknown_cols),
               "q": float(cfg.q), "max_value": float(np.nanmax(fld.values)),
               "min_value": float(np.nanmin(fld.values))}
    out.text("summary.txt", summary)
    return summary


def cmd_fit_load(cfg: RunConfig, out: Outputs) -> dict:
    """Gaussian load weights from wells and the composed soil-thickness surface."""
    if cfg.wells is None:
        fx = fixtures.well_fixture(cfg.seed)
        wells = list(fx.wells)
        grid = build_grid(fx.rect, fx.n_x, fx.cutouts, "all")
        out.call("wells.csv", write_wells, wells)
        out.call("cutouts.csv", write_polylines, list(fx.cutouts))
    else:
        wells = read_wells(cfg.path(cfg.wells))
        grid = _grid(cfg)
    if not wells:
        raise ConfigError("no wells to fit")
    op = assemble_operator(grid)
    res, loads, _ = fit_load(op, wells, cfg.sigma, cfg.eq_bounds, cfg.ge_bounds, cfg.use_bounds)
    out.call("soil.asc", write_ascii_grid, raster_from_field(res.surface))
    out.call("soil.vtk", write_vtk_structured, res.surface, name="soil")
    out.csv("weights.csv", ["j", "x", "y", "sigma", "lower", "upper", "weight"],
            [(j, q.center[0], q.center[1], q.sigma,
              q.lower if cfg.use_bounds else -np.inf, q.upper if cfg.use_bounds else np.inf, p)
             for j, (q, p) in enumerate(zip(loads, res.weights))])
    out.csv("constraints.csv", ["i", "x", "y", "depth", "kind", "surface", "residual"],
            [(i, w.location[0], w.location[1], w.depth, w.kind.value, w.depth + r, r)
             for i, (w, r) in enumerate(zip(wells, res.residuals))])
    eq = [abs(r) for w, r in zip(wells, res.residuals) if w.is_equality]
    ge = [r for w, r in zip(wells, res.residuals) if not w.is_equality]
    summary = {"command": "fit-load", "wells": len(wells), "equality_wells": len(eq),
               "inequality_wells": len(ge), "bounds": "on" if cfg.use_bounds else "off",
               "sigma": float(cfg.sigma), "objective": res.objective,
               "max_equality_residual": float(max(eq, default=0.0)),
               "min_inequality_margin": float(min(ge, default=0.0)),
               "kkt_residual": res.kkt_residual,
               "active_constraints": " ".join(res.active_constraints) or "none"}
    out.text("report.txt", summary)
    return summary


def cmd_reconstruct_boundary(cfg: RunConfig, out: Outputs) -> dict:
    """Bedrock from exposed-bedrock data, then the soil layer above it."""
    if cfg.terrain is None:
        fx = fixtures.bedrock_fixture(cfg.seed)
        terrain, exposed = fx.terrain, fx.exposed
        out.call("terrain.asc", write_ascii_grid, terrain)
        out.call("exposed.asc", write_ascii_grid, exposed)
    else:
        terrain = read_ascii_grid(cfg.path(cfg.terrain))
        if cfg.exposed is None:
            raise ConfigError("exposed is required when terrain is given")
        src = cfg.path(cfg.exposed)
        exposed = read_polylines(src) if src.suffix.lower() == ".csv" else read_ascii_grid(src)
    scale = cfg.row_scale * terrain.cellsize ** 4
    res = reconstruct_bedrock(terrain, exposed, cfg.samples_per_cell, scale, cfg.k,
                              cfg.detrend, cfg.min_separation)
    rec = res.reconstruction
    grid = res.bedrock.grid
    out.call("bedrock.asc", write_ascii_grid, raster_from_field(res.bedrock))
    out.call("soil.asc", write_ascii_grid, raster_from_field(res.soil))
    out.call("bedrock.vtk", write_vtk_structured, res.bedrock, name="bedrock")
    rows = [("value", n, *grid.node_xy(n), 0, 0, v) for n, v in res.boundary.f.items()]
    rows += [("normal_deriv", n, *grid.node_xy(n), d[0], d[1], v) for (n, d), v in res.boundary.h.items()]
    out.csv("boundary.csv", ["kind", "node", "x", "y", "dx", "dy", "value"],
            [(kind, int(n), x, y, int(dx), int(dy), v) for kind, n, x, y, dx, dy, v in rows])
    _curve_files(out, rec.curve, rec.svd.s)
    summary = {"command": "reconstruct-boundary", "system_rows": rec.system.shape[0],
               "system_cols": rec.system.shape[1], "data_points": len(res.data_nodes),
               "curves": len(res.curves), "k": rec.k,
               "k_source": "l-curve" if rec.k_from_lcurve else "override",
               "sigma_max": float(rec.svd.s[0]), "sigma_min": float(rec.svd.s[-1]),
               "sigma_k": float(rec.svd.s[rec.k - 1]), "truncated": len(rec.svd.s) - rec.k,
               "residual_norm": rec.solution.residual_norm,
               "trend": " ".join(fmt(v) for v in res.trend),
               "clamped_cells": res.clamped_cells, "max_overshoot": res.max_overshoot,
               "clamping": "active" if res.clamped_cells else "inactive"}
    out.text("summary.txt", summary)
    return summary


def _curve_files(out: Outputs, curve, s, suffix: str = "") -> None:
    out.csv(f"lcurve{suffix}.csv", ["k", "residual_norm", "solution_norm"],
            [(k, rho, eta) for k, eta, rho in curve])
    out.csv(f"spectrum{suffix}.csv", ["k", "sigma_k"], [(k + 1, v) for k, v in enumerate(s)])


def cmd_synthetic(cfg: RunConfig, out: Outputs) -> dict:
    """Condition numbers and spectra of the inner-square problem over ``radii`` and ``n_x_values``."""
    nxs = tuple(dict.fromkeys((cfg.n_x,) + cfg.n_x_values))
    spectra = condition_sweep(cfg.radii, nxs, cfg.row_scale)
    kappa = {key: (s[0] / s[-1] if s[-1] > 0 else np.inf) for key, s in spectra.items()}
    out.csv("kappa_vs_r.csv", ["r", "n_x", "kappa", "sigma_max", "sigma_min"],
            [(r, cfg.n_x, kappa[(r, cfg.n_x)], spectra[(r, cfg.n_x)][0], spectra[(r, cfg.n_x)][-1])
             for r in cfg.radii])
    out.csv("kappa_vs_nx.csv", ["n_x", "r", "kappa"],
            [(n, r, kappa[(r, n)]) for r in cfg.radii for n in nxs])
    for r in cfg.radii:
        s = spectra[(r, cfg.n_x)]
        out.csv(f"spectrum_r{r:.2f}.csv", ["k", "sigma_k"], [(k + 1, v) for k, v in enumerate(s)])
    lc = _lcurve_run(cfg)
    out.csv("lcurve.csv", ["k", "residual_norm", "solution_norm"],
            [(k, rho, eta) for k, eta, rho in lc["curve"]])
    ks = [kappa[(r, cfg.n_x)] for r in cfg.radii]
    summary = {"command": "synthetic", "n_x": cfg.n_x, "radii": " ".join(fmt(r) for r in cfg.radii),
               "kappa": " ".join(fmt(v) for v in ks),
               "kappa_decreasing_in_r": str(bool(np.all(np.diff(ks) < 0))).lower(),
               "lcurve_r": cfg.r, "lcurve_k": lc["k"]}
    out.text("summary.txt", summary)
    return summary


def _lcurve_run(cfg: RunConfig) -> dict:
    h = (2.0 / cfg.n_x)
    prob = synthetic_problem(cfg.r, cfg.n_x, cfg.n_points, scale=cfg.row_scale * h ** 4)
    b = prob.system.b
    if cfg.noise > 0:
        b = add_relative_noise(b, cfg.noise, np.random.default_rng(cfg.seed))
    svd = Svd.of(prob.system.A)
    curve = norms_curve(svd, b)
    k = lcurve_corner(curve, cfg.min_separation) if cfg.k is None else cfg.k
    if not 1 <= k <= len(svd.s):
        raise ConfigError(f"k={k} outside 1..{len(svd.s)}")

    def resid(kk):
        return boundary_residual(extract_boundary_values(tsvd_solve(svd, b, kk).coefficients, prob.op))

    return {"prob": prob, "svd": svd, "curve": curve, "k": k,
            "residual_k": resid(k), "residual_full": resid(len(svd.s))}


def cmd_lcurve(cfg: RunConfig, out: Outputs) -> dict:
    """L-curve of the inner-square problem at half side ``r``, optionally with noise."""
    lc = _lcurve_run(cfg)
    _curve_files(out, lc["curve"], lc["svd"].s)
    summary = {"command": "lcurve", "r": cfg.r, "n_x": cfg.n_x, "noise": cfg.noise,
               "seed": cfg.seed, "k": lc["k"], "k_source": "l-curve" if cfg.k is None else "override",
               "rank_bound": len(lc["svd"].s), "boundary_residual_k": lc["residual_k"],
               "boundary_residual_full": lc["residual_full"],
               "reference_max": float(np.nanmax(np.abs(lc["prob"].reference.values)))}
    out.text("summary.txt", summary)
    return summary


COMMANDS = {
    "forward": cmd_forward,
    "fit-load": cmd_fit_load,
    "reconstruct-boundary": cmd_reconstruct_boundary,
    "synthetic": cmd_synthetic,
    "lcurve": cmd_lcurve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bisurf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", type=Path, help="YAML configuration file")
        p.add_argument("--out", type=Path, help=f"output directory (overrides ${OUT_ENV})")
        p.add_argument("--seed", type=int, help="fixture and noise seed")
        if name in ("reconstruct-boundary", "lcurve", "synthetic"):
            p.add_argument("--k", type=int, help="truncation rank instead of the L-curve corner")
        if name == "fit-load":
            p.add_argument("--no-bounds", action="store_true", help="drop the weight bounds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed, "k": getattr(args, "k", None)}
        if getattr(args, "no_bounds", False):
            overrides["use_bounds"] = False
        cfg = load_config(args.config, **overrides)
        out_dir = args.out or os.environ.get(OUT_ENV) or cfg.path(cfg.out)
        out = Outputs(Path(out_dir))
        summary = COMMANDS[args.command](cfg, out)
        out.flush()
    except NUMERIC_ERRORS as exc:
        print(f"bisurf {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, BisurfError) as exc:
        print(f"bisurf {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for key, value in summary.items():
        print(f"{key}: {fmt(value) if isinstance(value, (float, np.floating)) else value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
