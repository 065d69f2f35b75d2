"""Bedrock under a terrain raster from exposed-bedrock data.

The seeded fixture is a terrain raster whose bedrock is known.  The
boundary data of the bedrock are reconstructed from the exposed cells, the
bedrock surface is re-solved and the soil thickness is terrain minus
bedrock.  Rasters are written to the output directory.

    python demos/bedrock.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from bisurf.bedrock import reconstruct_bedrock
from bisurf.fixtures import bedrock_fixture
from bisurf.geodata import raster_from_field, write_ascii_grid


def main(out_dir="bedrock_demo", seed=0):
    fx = bedrock_fixture(seed)
    res = reconstruct_bedrock(fx.terrain, fx.exposed, scale=fx.terrain.cellsize ** 4)
    rec = res.reconstruction
    truth = np.flipud(fx.bedrock.values)
    covered = ~res.exposed
    err = np.abs(res.bedrock.values - truth)[covered]
    print(f"{len(res.data_nodes)} data nodes on {len(res.curves)} curves, "
          f"system {rec.system.shape[0]}x{rec.system.shape[1]}, k={rec.k} of {len(rec.svd.s)}")
    print(f"covered cells: bedrock error max {err.max():.4f}, mean {err.mean():.4f}; "
          f"soil thickness {res.soil.values[covered].min():.3f} to {res.soil.values[covered].max():.3f}")
    print(f"clamped cells: {res.clamped_cells}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ascii_grid(raster_from_field(res.bedrock), out / "bedrock.asc")
    write_ascii_grid(raster_from_field(res.soil), out / "soil.asc")
    print(f"rasters written to {out}/")


if __name__ == "__main__":
    main(*sys.argv[1:2])
