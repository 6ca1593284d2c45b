"""
Tests for run configuration resolution
"""

import pytest

from src.config import SCHEMA, load_run_config, validate_config
from src.errors import ConfigurationError


def test_defaults_cover_every_key():
    config = load_run_config()
    assert set(config.values) == set(SCHEMA)
    assert config["train.lambda_l1"] == 100.0
    assert config["generator.block_widths"] == (256, 128, 64)
    assert config.section("wgan")["gp_weight"] == 10.0


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# small run\ntrain.steps=10\ndata.target_rpms=1772,1750\n"
                    "generator.skip_connections=false\n")
    config = load_run_config(path, {"train.steps": "20", "run.seed": 9, "data.snr_db": None})
    assert config["train.steps"] == 20
    assert config["run.seed"] == 9
    assert config["data.target_rpms"] == (1772, 1750)
    assert config["generator.skip_connections"] is False
    assert config["data.snr_db"] == float("inf")


def test_unknown_key_and_bad_values(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("train.stepz=10\n")
    with pytest.raises(ConfigurationError, match="unknown config key"):
        load_run_config(path)
    with pytest.raises(ConfigurationError, match="bad value"):
        load_run_config(overrides={"train.steps": "many"})
    with pytest.raises(ConfigurationError, match="not found"):
        load_run_config(tmp_path / "absent.env")


def test_invalid_values_are_collected():
    with pytest.raises(ConfigurationError) as err:
        load_run_config(overrides={"train.steps": "0", "generator.dropout_p": "1.5"})
    assert "train.steps" in str(err.value) and "dropout_p" in str(err.value)


def test_digest_is_deterministic(tmp_path):
    a = load_run_config(overrides={"run.seed": "3"})
    b = load_run_config(overrides={"run.seed": 3})
    c = load_run_config(overrides={"run.seed": "4"})
    assert a.digest() == b.digest() != c.digest()
    written = a.write(tmp_path)
    assert written.name == "config.resolved.env"
    assert "run.seed=3\n" in written.read_text()
    assert load_run_config(written).digest() == a.digest()


def test_environment_validation_returns_list():
    assert isinstance(validate_config(), list)
