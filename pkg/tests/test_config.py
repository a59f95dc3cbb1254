"""Tests for configuration loading."""

import json

import pytest

from src.config import JOBS_ENV_VAR, Config


@pytest.fixture
def config_path(tmp_path):
    return str(tmp_path / "modspec.json")


def test_defaults_without_file(config_path, monkeypatch):
    monkeypatch.delenv(JOBS_ENV_VAR, raising=False)
    config = Config(config_path)
    options = config.get_synthesis_options()
    assert options.eps == 1e-4
    assert options.max_iters == 50
    assert (options.d_min, options.d_max) == (1e-6, 1e6)
    assert config.get_rcond_threshold() == 1e-12
    assert config.get_jobs() == 1
    assert config.get_n_samples() == 1000
    assert config.get_seed() == 42
    assert config.get_region_cells() == 41


def test_file_values_are_merged(config_path, monkeypatch):
    monkeypatch.delenv(JOBS_ENV_VAR, raising=False)
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump({"synthesis": {"max_iters": 7}, "parallel": {"jobs": 3}}, f)
    config = Config(config_path)
    options = config.get_synthesis_options()
    assert options.max_iters == 7
    assert options.eps == 1e-4
    assert config.get_jobs() == 3
    assert config.get_worker_timeout() == 600


def test_broken_file_falls_back_to_defaults(config_path):
    with open(config_path, "w", encoding="utf-8") as f:
        f.write("{not json")
    assert Config(config_path).get("synthesis", "max_iters") == 50


@pytest.mark.parametrize("env_value, expected", [("4", 4), ("0", 1), ("many", 1)])
def test_jobs_environment_override(config_path, monkeypatch, env_value, expected):
    monkeypatch.setenv(JOBS_ENV_VAR, env_value)
    assert Config(config_path).get_jobs() == expected


def test_set_and_save(config_path):
    config = Config(config_path)
    config.set("verification", "seed", value=7)
    config.save()
    assert Config(config_path).get_seed() == 7
    with pytest.raises(ValueError):
        config.set(value=1)


def test_missing_key_returns_default(config_path):
    assert Config(config_path).get("nope", "deeper", default="x") == "x"
