"""Run configuration: a flat YAML mapping of named parameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import BisurfError

OUT_ENV = "BISURF_OUT"


class ConfigError(BisurfError, ValueError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the command-line runs.

    Paths are resolved relative to the configuration file.  ``None`` for an
    input path means the seeded fixture is generated instead.
    """

    # domain
    rect: tuple = (0.0, 0.0, 2.0, 2.0)
    n_x: int = 8
    dirichlet: str = "all"
    cutouts: str | None = None
    # forward
    q: float = 0.1
    # load fit
    wells: str | None = None
    sigma: float = 1.5
    eq_bounds: tuple = (0.0, 2.0)
    ge_bounds: tuple = (-1.0, 1.0)
    use_bounds: bool = True
    # boundary reconstruction
    terrain: str | None = None
    exposed: str | None = None
    samples_per_cell: float = 2.0
    row_scale: float = 1.0
    k: int | None = None
    detrend: bool = True
    min_separation: float = 0.02
    # synthetic study
    radii: tuple = (0.5, 0.7, 0.9, 1.0)
    n_x_values: tuple = (8, 16)
    n_points: int | None = None
    r: float = 0.7
    noise: float = 0.0
    # run
    seed: int = 0
    out: str = "out"
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        if len(self.rect) != 4:
            raise ConfigError("rect needs four numbers x0, y0, x1, y1")
        object.__setattr__(self, "rect", tuple(float(v) for v in self.rect))
        for name in ("eq_bounds", "ge_bounds"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if int(self.n_x) < 4 or any(int(n) < 4 for n in self.n_x_values):
            raise ConfigError("n_x must be >= 4")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.k is not None and int(self.k) < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not self.samples_per_cell > 0 or not self.row_scale > 0:
            raise ConfigError("samples_per_cell and row_scale must be positive")
        if self.noise < 0 or self.min_separation < 0:
            raise ConfigError("noise and min_separation must be nonnegative")
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "n_x_values", tuple(int(n) for n in self.n_x_values))

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "base_dir"}


def load_config(path=None, **overrides) -> RunConfig:
    """Read a YAML mapping (or defaults when ``path`` is None) and apply overrides.

    ``None`` overrides are ignored.
    """
    values: dict = {}
    base = "."
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping")
        unknown = sorted(set(raw) - set(_FIELDS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(raw)
        base = str(path.parent)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(base_dir=base, **values)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
