"""Regenerate the forward-solve golden file from the dense oracle.

Run from the repository root: ``python tests/data/make_golden.py``.
"""

import sys
from pathlib import Path

import numpy as np

here = Path(__file__).resolve().parent
sys.path.insert(0, str(here.parent))
from oracles import clamped_square_plate  # noqa: E402

N_X, SIDE, Q = 8, 2.0, 0.1

if __name__ == "__main__":
    u = clamped_square_plate(N_X, SIDE, Q)
    h = SIDE / N_X
    n = N_X + 1
    lines = [f"ncols {n}", f"nrows {n}", f"xllcorner {-h / 2!r}", f"yllcorner {-h / 2!r}",
             f"cellsize {h!r}", "NODATA_value -9999.0"]
    lines += [" ".join(repr(float(v)) for v in row) for row in np.flipud(u)]
    (here / "forward_q0.1_nx8.asc").write_text("\n".join(lines) + "\n")
