"""Configuration parsing and overrides."""

import pytest

from kerrlattice.config import ConfigError, apply_overrides, load_config, parse_config

BASE = """
[lattice]
n_sites = 2

[model]
delta_over_gamma = -10.0
kerr_u_over_gamma = 10.0
hop_j_over_gamma = -10.0
pump_g_over_gamma = 3.0

[truncation]
schedule = [[4, 6], [5, 8]]

[sweep]
values = [1.0, 2.0]
"""


def write(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    return path


def test_defaults_and_scaling(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    p = cfg.params
    assert (p.delta, p.kerr_u, p.hop_j, p.loss_gamma, p.loss_eta) == (-10, 10, -10, 1, 1)
    assert p.pump_g == 3
    assert [t.n_max_per_mode for t in cfg.schedule] == [4, 5]
    assert cfg.solver.method == "iterative"
    assert cfg.lattice.edges == ((0, 1),)
    assert cfg.warm_start
    assert len(cfg.sha256) == 64


def test_overrides(tmp_path):
    cfg = load_config(write(tmp_path, BASE), ["model.pump_g_over_gamma=7.5", "solver.method=direct",
                                               "sweep.values=[3, 4, 5]"])
    assert cfg.params.pump_g == 7.5
    assert cfg.solver.method == "direct"
    assert cfg.values == [3, 4, 5]
    assert "# override: model.pump_g_over_gamma=7.5" in cfg.text
    data = apply_overrides({}, ["a.b.c=1"])
    assert data == {"a": {"b": {"c": 1}}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"a": 1}, ["a.b=2"])


def test_raw_units():
    cfg = parse_config({"model": {"units": "raw", "loss_gamma": 0.0, "loss_eta": 2.0, "kerr_u": 1.0},
                        "truncation": {"n_max_per_mode": 3, "n_max_total": 3}})
    assert cfg.unit_rate == 2.0
    assert cfg.params.loss_gamma == 0.0


@pytest.mark.parametrize("data", [
    {"truncation": {"schedule": [[4, 6], [4, 8]]}},
    {"truncation": {}},
    {"truncation": {"n_max_per_mode": 0, "n_max_total": 3}},
    {"truncation": {"schedule": [[4, 6]]}, "model": {"units": "raw", "loss_gamma": 0.0}},
    {"truncation": {"schedule": [[4, 6]]}, "model": {"delta_over_gamma": "x"}},
    {"truncation": {"schedule": [[4, 6]]}, "solver": {"method": "magic"}},
    {"truncation": {"schedule": [[4, 6]]}, "solver": {"bogus": 1}},
    {"truncation": {"schedule": [[4, 6]]}, "sweep": {"axis": "kerr"}},
    {"truncation": {"schedule": [[4, 6]]}, "sweep": {"values": []}},
    {"truncation": {"schedule": [[4, 6]]}, "sweep": {"phase_rule": "random"}},
    {"truncation": {"schedule": [[4, 6]]}, "lattice": {"n_sites": 2, "edges": [[0, 0]]}},
    {"truncation": {"schedule": [[4, 6]]}, "model": {"units": "furlongs"}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[model\n"))
