import pytest

from errors import ConfigError
from parser import PRESETS, load_config, parse_config, serialize_config, to_scenario

MINIMAL = """
[scenario]
v_minus = 1.0
v_plus = 1.1
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.time.cfl == 0.45
    assert cfg.grid.n_cells == 4096
    assert cfg.grid.x_max is None
    assert cfg.closure.name == "m1"
    assert cfg.rates.targets == "improved"


def test_cfl_out_of_range():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "[time]\ncfl = 1.5\n")
    assert "cfl must lie in (0,1)" in str(info.value)


def test_unknown_key_suggests_nearest():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "[time]\ncfll = 0.3\n")
    message = str(info.value)
    assert "time.cfll" in message
    assert "did you mean 'time.cfl'" in message


def test_missing_required_key():
    with pytest.raises(ConfigError) as info:
        parse_config("[grid]\nn_cells = 1024\n")
    assert "missing required key 'scenario'" in str(info.value)


def test_all_errors_reported_together():
    text = MINIMAL + "[time]\ncfl = 2.0\nsamples = 1\n[grid]\nn_cells = 4\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert len(info.value.errors) >= 3


def test_syntax_error():
    with pytest.raises(ConfigError) as info:
        parse_config("[scenario\nv_minus = 1")
    assert "syntax error" in str(info.value)


def test_preset_expands_to_acceptance_scenario():
    cfg = parse_config('scenario = "m1-default"\n')
    assert cfg.closure.name == "m1"
    assert cfg.closure.sigma == 1.0
    assert (cfg.scenario.v_minus, cfg.scenario.v_plus) == (1.0, 1.1)
    assert (cfg.scenario.u_minus, cfg.scenario.u_plus) == (0.0, 0.05)
    assert cfg.scenario.perturbation.amplitude == 0.01
    assert cfg.scenario.perturbation.shape == "bump"
    assert cfg.grid.n_cells == 8192
    assert cfg.time.end == 500.0
    assert to_scenario(cfg).wave_strength == pytest.approx(0.15)


def test_explicit_keys_override_preset():
    cfg = parse_config('scenario = "gamma-default"\n[grid]\nn_cells = 1024\n[closure]\ngamma = 1.4\n')
    assert cfg.grid.n_cells == 1024
    assert cfg.closure.name == "gamma_law"
    assert cfg.closure.gamma == 1.4
    assert cfg.scenario.v_plus == 1.1


def test_unknown_preset():
    with pytest.raises(ConfigError) as info:
        parse_config('scenario = "m1-defualt"\n')
    assert "did you mean 'm1-default'" in str(info.value)


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_every_preset_validates(preset):
    spec = to_scenario(parse_config(f'scenario = "{preset}"\n'))
    assert spec.wave_strength <= 0.5


def test_closure_shorthand():
    cfg = parse_config('closure = "gamma_law"\n' + MINIMAL)
    assert cfg.closure.name == "gamma_law"
    assert to_scenario(cfg).closure_params == {"gamma": 2.0, "alpha": 1.0}


def test_serialized_config_parses_back():
    cfg = parse_config('scenario = "m1-smoke"\n[rates]\nwindow = [2.0, 20.0]\n[output]\nxlsx = true\n')
    assert parse_config(serialize_config(cfg)) == cfg


def test_to_scenario_carries_profile_settings():
    cfg = parse_config(MINIMAL + "[profile]\nn_cells = 512\nxi_factor = 10.0\nrichardson = true\n")
    spec = to_scenario(cfg)
    assert spec.profile_cells == 512
    assert spec.profile_xi_factor == 10.0
    assert spec.profile_richardson


def test_load_config(write_config):
    path = write_config('scenario = "m1-smoke"\n')
    assert load_config(path).grid.n_cells == 1024
    with pytest.raises(ConfigError):
        load_config(path.parent / "missing.toml")
