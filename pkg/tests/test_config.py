import pytest

from bisurf.config import ConfigError, RunConfig, load_config


def test_defaults():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.rect == (0.0, 0.0, 2.0, 2.0) and cfg.n_x == 8 and cfg.q == 0.1
    assert cfg.sigma == 1.5 and cfg.eq_bounds == (0.0, 2.0) and cfg.ge_bounds == (-1.0, 1.0)
    assert cfg.radii == (0.5, 0.7, 0.9, 1.0)


def test_yaml_values_and_overrides(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text("n_x: 16\nradii: [0.9, 1.0]\nwells: data/w.csv\nk: 5\n")
    cfg = load_config(p, k=7, seed=None)
    assert cfg.n_x == 16 and cfg.radii == (0.9, 1.0) and cfg.k == 7
    assert cfg.path(cfg.wells) == tmp_path / "data" / "w.csv"
    assert cfg.path("/abs/x") .as_posix() == "/abs/x"
    assert cfg.path(None) is None


def test_empty_yaml_is_defaults(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text("")
    assert load_config(p).n_x == 8


@pytest.mark.parametrize(
    "text, match",
    [
        ("nx: 8\n", "unknown config keys: nx"),
        ("n_x: 2\n", "n_x"),
        ("sigma: 0\n", "sigma"),
        ("eq_bounds: [2, 0]\n", "exceeds"),
        ("k: 0\n", "k must"),
        ("rect: [0, 1]\n", "rect"),
        ("noise: -1\n", "nonnegative"),
        ("- 1\n- 2\n", "mapping"),
        ("a: [\n", "YAML"),
    ],
)
def test_invalid_configs(tmp_path, text, match):
    p = tmp_path / "bad.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/run.yaml")


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)
