"""Soil thickness from twenty wells by bounded Gaussian-load weights.

Three wells reach the bedrock (exact depth), seventeen give lower bounds.
The fit is run with the default weight box and without it; without bounds
the surface interpolates every well, inequality wells included.

    python demos/load_fit.py
"""

import numpy as np

from bisurf.assembly import assemble_operator
from bisurf.fixtures import well_fixture
from bisurf.grid import build_grid
from bisurf.loadfit import fit_load


def main(seed=0):
    fx = well_fixture(seed)
    op = assemble_operator(build_grid(fx.rect, fx.n_x, list(fx.cutouts), dirichlet="all"))
    eq = np.array([w.is_equality for w in fx.wells])
    for use_bounds in (True, False):
        res, loads, _ = fit_load(op, fx.wells, use_bounds=use_bounds)
        print(f"bounds {'on ' if use_bounds else 'off'}: objective {res.objective:.4e}, "
              f"max |equality residual| {np.abs(res.residuals[eq]).max():.1e}, "
              f"min inequality margin {res.residuals[~eq].min():.1e}")
        print(f"  weights in [{res.weights.min():.3f}, {res.weights.max():.3f}], "
              f"{len(res.active_constraints)} active constraints, "
              f"thickness max {np.nanmax(res.surface.values):.3f}")


if __name__ == "__main__":
    main()
