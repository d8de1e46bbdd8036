"""Config parsing, validation errors, and the built-in example gallery."""

import pytest

from stoplab.config import (
    ConfigError,
    builtin_examples,
    load_config,
    loads_config,
    save_config,
    save_config_text,
)
from stoplab.filtering import two_point_drift
from stoplab.pipeline import build_problem

MINIMAL = """
[problem]
drift = "0"
sigma = "1"
terminal = "x"
horizon = 1.0

[grid]
nt = 100
nx = 100

[simulation]
seed = 42
"""


def test_minimal_config_loads():
    cfg = loads_config(MINIMAL)
    assert cfg.problem.drift == "0"
    assert cfg.grid.nt == 100
    assert cfg.simulation.seed == 42


def test_sigma_time_dependence_rejected():
    with pytest.raises(ConfigError, match="sigma must not depend on t"):
        loads_config(MINIMAL.replace('sigma = "1"', 'sigma = "t*x"'))


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="driftt"):
        loads_config(MINIMAL.replace('drift = "0"', 'driftt = "0"\ndrift = "0"'))


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="plotting"):
        loads_config(MINIMAL + "\n[plotting]\nstyle = fancy\n")


def test_unknown_check_rejected():
    with pytest.raises(ConfigError, match="boundry_monotone"):
        loads_config(MINIMAL + "\n[checks]\nrun = boundry_monotone\n")


def test_seed_required_in_simulation():
    text = MINIMAL.replace("seed = 42", "n_paths = 10")
    with pytest.raises(ConfigError, match="seed"):
        loads_config(text)


def test_bad_expression_reports_offset():
    with pytest.raises(ConfigError, match="offset"):
        loads_config(MINIMAL.replace('drift = "0"', 'drift = "x +"'))


def test_drift_and_family_mutually_exclusive():
    text = MINIMAL.replace('drift = "0"', 'drift = "0"\ndrift_family = brownian_bridge\npin = 0')
    with pytest.raises(ConfigError, match="exactly one"):
        loads_config(text)


def test_family_parameter_requirements():
    text = MINIMAL.replace('drift = "0"', "drift_family = ou_time_mean")
    with pytest.raises(ConfigError, match="rate"):
        loads_config(text)


def test_couplings_parse():
    text = MINIMAL.replace("seed = 42", "seed = 42\ncouplings = 0.25 0.5 1.0 ; 0.1 0.3 0.0")
    cfg = loads_config(text)
    assert cfg.simulation.couplings == ((0.25, 0.5, 1.0), (0.1, 0.3, 0.0))


def test_builtin_gallery_contents():
    gallery = builtin_examples()
    expected = {
        "bm_time_drift", "gbm_time_drift", "brownian_bridge_exp",
        "brownian_bridge_linear_flipped", "two_point_filtering", "ou_time_mean",
    }
    assert expected <= set(gallery)
    assert len(set(gallery)) == len(gallery) >= 6
    for cfg in gallery.values():
        assert cfg.simulation is None or isinstance(cfg.simulation.seed, int)


def test_two_point_example_wires_closed_form():
    cfg = builtin_examples()["two_point_filtering"]
    spec = build_problem(cfg.problem)
    assert spec.drift(0.0, 0.0) == two_point_drift(0.5, -1.0, 2.0, 0.0, 0.0)


def test_builtin_examples_roundtrip(tmp_path):
    for name, cfg in builtin_examples().items():
        path = tmp_path / f"{name}.cfg"
        save_config(cfg, str(path))
        loaded = load_config(str(path))
        # dataclass equality field by field (name comes from the file stem)
        assert loaded.problem == cfg.problem
        assert loaded.grid == cfg.grid
        assert loaded.simulation == cfg.simulation
        assert loaded.checks == cfg.checks
        assert loaded.output == cfg.output


def test_save_text_is_stable():
    cfg = builtin_examples()["bm_time_drift"]
    assert save_config_text(cfg) == save_config_text(cfg)
