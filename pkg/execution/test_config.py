import pytest

from config import (
    RunConfig,
    build_config,
    config_hash,
    dumps,
    env_overrides,
    load_config,
    parse_value,
    save_config,
)
from errors import PreconditionError


def test_defaults_are_desk_values():
    config = build_config(environ={})
    assert (config.M, config.K, config.H, config.B, config.C) == (312, 39, 4, 11, 50)
    assert config.U == 0.33
    assert config.gamma == (1.0,)
    assert config.table_path.endswith("critical_values.csv")


def test_save_and_load_round_trip(tmp_path):
    config = build_config({"gamma": (0.94, 1.0), "m_grid": (52, 104), "seed": 3}, environ={})
    path = tmp_path / "run.env"
    save_config(config, str(path))
    again = load_config(str(path))
    assert again == config
    assert dumps(again) == dumps(config)


def test_hash_is_stable_and_tracks_parameters():
    a = build_config({"seed": 1}, environ={})
    assert config_hash(a) == config_hash(build_config({"seed": 1}, environ={}))
    assert config_hash(a) != config_hash(build_config({"seed": 2}, environ={}))
    assert config_hash(a) == config_hash(build_config({"seed": 1, "overwrite": True}, environ={}))


def test_precedence_env_file_cli(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("SEED=7\nK=26\n", encoding="utf-8")
    environ = {"WORKBENCH_SEED": "5", "WORKBENCH_M": "104", "WORKBENCH_K": "52"}
    config = build_config({"seed": 9}, str(path), environ)
    assert config.seed == 9
    assert config.K == 26
    assert config.M == 104
    assert build_config(None, str(path), environ).seed == 7


def test_env_overrides_only_prefixed_keys():
    values = env_overrides({"WORKBENCH_GAMMA": "0.94,1.0", "SEED": "4"})
    assert values == {"gamma": (0.94, 1.0)}


def test_parse_value_types():
    assert parse_value("M", " 52 ") == 52
    assert parse_value("U", "0.5") == 0.5
    assert parse_value("k_grid", "26,39") == (26, 39)
    assert parse_value("overwrite", "sim") is True
    assert parse_value("overwrite", "") is False
    assert parse_value("estimator", "ledoit-wolf") == "ledoit-wolf"
    with pytest.raises(PreconditionError):
        parse_value("M", "abc")
    with pytest.raises(PreconditionError):
        parse_value("overwrite", "talvez")


@pytest.mark.parametrize(
    "override",
    [
        {"U": 0.0},
        {"U": 0.01},
        {"level": 0.3},
        {"gamma": (1.2,)},
        {"M": 4, "H": 4},
        {"smoothing_window": 8},
        {"estimator": "robust"},
        {"forecast_mode": "bayes"},
        {"p_draws": 1},
    ],
)
def test_validation_rejects(override):
    with pytest.raises(PreconditionError):
        build_config(override, environ={})


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("SEEDS=1\n", encoding="utf-8")
    with pytest.raises(PreconditionError):
        build_config(None, str(path), {})


def test_missing_file():
    with pytest.raises(PreconditionError):
        build_config(None, "/nao/existe/run.env", {})


def test_table_path_override():
    assert RunConfig(table="x.csv").table_path == "x.csv"
