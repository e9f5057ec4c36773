"""Tests for configuration and scenario file loading"""

from pathlib import Path

import pytest

from reclustering.core.config_loader import (
    CONFIG_ENV_VAR,
    ConfigLoader,
    ReclusteringConfig,
    load_scenario_file,
)
from reclustering.core.exceptions import ConfigurationError


@pytest.fixture
def isolated(tmp_path, monkeypatch) -> Path:
    """Empty home and working directory, no config environment variable"""
    home = tmp_path / "home"
    work = tmp_path / "work"
    home.mkdir()
    work.mkdir()
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    monkeypatch.chdir(work)
    return tmp_path


def write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


class TestConfigHierarchy:
    def test_defaults_without_files(self, isolated):
        config, sources = ConfigLoader.load_config()
        assert sources == []
        assert config == ReclusteringConfig()
        assert config.seed == 20250505
        assert (config.reps, config.boot, config.mc_draws) == (1000, 999, 1000)

    def test_project_overrides_user(self, isolated):
        write(isolated / "home" / ".config" / "reclustering" / "config.yml", "reps: 10\nboot: 20\n")
        write(isolated / "work" / "reclustering.yml", "reps: 30\n")
        config, sources = ConfigLoader.load_config()
        assert (config.reps, config.boot) == (30, 20)
        assert len(sources) == 2

    def test_environment_and_explicit_file_come_last(self, isolated, monkeypatch):
        write(isolated / "work" / "reclustering.yml", "alpha: 0.1\nreps: 5\n")
        env_file = write(isolated / "env.yml", "alpha: 0.01\n")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(env_file))
        explicit = write(isolated / "explicit.yml", "reps: 7\n")
        config, _ = ConfigLoader.load_config(explicit)
        assert config.alpha == 0.01
        assert config.reps == 7

    def test_missing_environment_file(self, isolated, monkeypatch):
        monkeypatch.setenv(CONFIG_ENV_VAR, str(isolated / "nope.yml"))
        with pytest.raises(ConfigurationError, match="missing file"):
            ConfigLoader.load_config()

    def test_missing_explicit_file(self, isolated):
        with pytest.raises(ConfigurationError, match="not found"):
            ConfigLoader.load_config(isolated / "nope.yml")

    def test_unknown_key_is_rejected(self, isolated):
        write(isolated / "work" / "reclustering.yml", "repetitions: 10\n")
        with pytest.raises(ConfigurationError, match="repetitions"):
            ConfigLoader.load_config()

    def test_invalid_value_is_rejected(self, isolated):
        write(isolated / "work" / "reclustering.yml", "alpha: 1.5\n")
        with pytest.raises(ConfigurationError, match="alpha"):
            ConfigLoader.load_config()

    def test_invalid_yaml(self, isolated):
        write(isolated / "work" / "reclustering.yml", "reps: [1, 2\n")
        with pytest.raises(ConfigurationError, match="Invalid YAML"):
            ConfigLoader.load_config()

    def test_non_mapping_document(self, isolated):
        write(isolated / "work" / "reclustering.yml", "- 1\n- 2\n")
        with pytest.raises(ConfigurationError, match="YAML dictionary"):
            ConfigLoader.load_config()

    def test_empty_file_means_defaults(self, isolated):
        write(isolated / "work" / "reclustering.yml", "")
        config, _ = ConfigLoader.load_config()
        assert config == ReclusteringConfig()


class TestReclusteringConfig:
    def test_log_level_is_normalized(self):
        assert ReclusteringConfig(log_level="debug").log_level == "DEBUG"

    def test_unknown_log_level(self):
        with pytest.raises(ConfigurationError, match="log_level"):
            ConfigLoader.validate({"log_level": "chatty"})

    def test_test_settings_with_overrides(self):
        settings = ReclusteringConfig(reps=50, cv1_convention="textbook").test_settings(force=True)
        assert settings.reps == 50
        assert settings.cv1_convention == "textbook"
        assert settings.force is True

    @pytest.mark.parametrize("sided", ["two", "one", "lower"])
    def test_decision_rules_reach_the_settings(self, sided):
        assert ConfigLoader.validate({"sided": sided}).test_settings().sided == sided

    def test_unknown_decision_rule(self):
        with pytest.raises(ConfigurationError, match="sided"):
            ConfigLoader.validate({"sided": "upper"})

    def test_default_file_round_trips(self, tmp_path):
        path = tmp_path / "nested" / "reclustering.yml"
        ConfigLoader.create_default_config(path)
        text = path.read_text(encoding="utf-8")
        assert "# Master seed" in text
        assert ConfigLoader.validate(ConfigLoader.load_config_from_file(path)) == ReclusteringConfig()


class TestScenarioFiles:
    def test_single_scenario_inherits_configuration(self, tmp_path):
        path = write(
            tmp_path / "cell.yml",
            "structure:\n  n_gross: 4\n  fines_per_gross: 3\niterations: 10\nboot: 49\n",
        )
        config = ReclusteringConfig(reps=77, boot=11, fine_reorder=True)
        (scenario,) = load_scenario_file(path, config)
        assert scenario.name == "cell-0"
        assert scenario.reps == 77
        assert scenario.boot == 49
        assert scenario.dgp.fine_reorder is True
        assert scenario.structure.n_gross == 4

    def test_cells_list(self, tmp_path):
        path = write(
            tmp_path / "grid.yml",
            "cells:\n  - name: a\n    iterations: 5\n  - name: b\n    dgp:\n      rho_u_gross: 0.2\n",
        )
        scenarios = load_scenario_file(path, ReclusteringConfig())
        assert [s.name for s in scenarios] == ["a", "b"]
        assert scenarios[1].dgp.rho_u_gross == 0.2

    def test_unknown_scenario_key_names_the_cell(self, tmp_path):
        path = write(tmp_path / "bad.yml", "name: broken\nrho_u: 0.1\n")
        with pytest.raises(ConfigurationError, match="broken") as excinfo:
            load_scenario_file(path, ReclusteringConfig())
        assert excinfo.value.context.scenario_cell == "broken"

    def test_cells_must_stand_alone(self, tmp_path):
        path = write(tmp_path / "mixed.yml", "iterations: 3\ncells:\n  - name: a\n")
        with pytest.raises(ConfigurationError, match="cells"):
            load_scenario_file(path, ReclusteringConfig())
