import json
from pathlib import Path

import numpy as np
import pytest

from poreflow.commands import apply_overrides
from poreflow.config import SimConfig, config_from_mapping, parse_config, save_config
from poreflow.errors import ConfigError
from poreflow.scenarios import EQUILIBRIUM_PRESETS
from poreflow.utils import config_digest, parse_value


def write_config(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "config.json"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_config_gets_defaults(tmp_path: Path) -> None:
    path = write_config(tmp_path, json.dumps({"scenario": "spherical_cap", "N": 16}))

    config = parse_config(path)

    assert config.scenario == "spherical_cap"
    assert config.N == 16
    assert config.stop_tol == 1e-6
    assert config.beta == 1.0
    assert config.sim_params().quadrature.alpert_order == 8
    assert config.initial_curve().axis_ends == ("start",)


def test_unknown_key_reports_key_and_line(tmp_path: Path) -> None:
    path = write_config(tmp_path, '{\n  "N": 16,\n  "colour": "red"\n}\n')

    with pytest.raises(ConfigError) as info:
        parse_config(path)

    assert info.value.key == "colour"
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_range_errors_carry_the_key() -> None:
    text = '{\n  "dt": -0.1\n}'
    with pytest.raises(ConfigError) as info:
        config_from_mapping({"dt": -0.1}, text)
    assert info.value.key == "dt"
    assert info.value.line == 2

    for epsilon in (-0.1, 1.5):
        with pytest.raises(ConfigError) as info:
            config_from_mapping({"epsilon": epsilon})
        assert info.value.key == "epsilon"


def test_unregularized_grading_is_accepted() -> None:
    config = config_from_mapping({"scenario": "annulus", "epsilon": 0.0, "N": 8})
    nodes = config.initial_curve().mesh.nodes

    assert config.epsilon == 0.0
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert np.all(np.diff(nodes) > 0.0)


def test_type_mismatch_is_rejected() -> None:
    for values in ({"N": "many"}, {"N": 16.5}, {"beta": True}, {"bending": 1}):
        with pytest.raises(ConfigError) as info:
            config_from_mapping(values)
        assert info.value.key == next(iter(values))


def test_shape_key_of_another_scenario_is_rejected() -> None:
    with pytest.raises(ConfigError) as info:
        config_from_mapping({"scenario": "flat_disk", "inner_radius": 1.0})
    assert info.value.key == "inner_radius"


def test_invalid_json_reports_line(tmp_path: Path) -> None:
    path = write_config(tmp_path, '{\n  "N": 16,\n}')
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.line == 3


def test_preset_fills_values_and_explicit_keys_win() -> None:
    case = EQUILIBRIUM_PRESETS["equilibrium_2"]

    config = config_from_mapping({"preset": "equilibrium_2", "gamma_l": 0.5, "N": 8})

    assert config.scenario == "cup"
    assert config.area == case.area
    assert config.gamma_g == case.gamma_g
    assert config.H0 == case.H0
    assert config.gamma_l == 0.5

    with pytest.raises(ConfigError) as info:
        config_from_mapping({"preset": "equilibrium_9"})
    assert info.value.key == "preset"


def test_save_and_parse_round_trip(tmp_path: Path) -> None:
    config = config_from_mapping({"scenario": "annulus", "outer_radius": 3.0, "gamma_l": 1.0, "N": 8})
    path = tmp_path / "saved.json"

    save_config(config, path)

    assert parse_config(path) == config
    assert json.loads(path.read_text(encoding="utf-8"))["outer_radius"] == 3.0


def test_overrides_follow_default_types() -> None:
    values = apply_overrides({"N": 32}, ["N=8", "bending=false", "min_hole_radius=0.1", "refine_at=end"])

    assert values == {"N": 8, "bending": False, "min_hole_radius": 0.1, "refine_at": "end"}
    with pytest.raises(ConfigError) as info:
        apply_overrides({}, ["N"])
    assert info.value.key == "set"
    with pytest.raises(ConfigError) as info:
        apply_overrides({}, ["colour=red"])
    assert info.value.key == "colour"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["N=eight"])


def test_parse_value() -> None:
    assert parse_value(True, "no") is False
    assert parse_value(False, "on") is True
    assert parse_value(3, "8") == 8
    assert parse_value(0.1, "1e-3") == 1e-3
    assert parse_value(None, "null") is None
    assert parse_value(None, "2") == 2
    assert parse_value(None, "both") == "both"
    assert parse_value("annulus", "cup") == "cup"


def test_digest_ignores_key_order() -> None:
    first = config_digest({"a": 1, "b": 2.5})
    second = config_digest({"b": 2.5, "a": 1})

    assert first == second
    assert len(first) == 16
    assert config_digest(SimConfig().to_dict()) != config_digest(SimConfig(N=16).to_dict())
