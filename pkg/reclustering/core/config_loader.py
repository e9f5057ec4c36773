"""Configuration loader for reclustering.yml files"""

import logging
import os
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .exceptions import ConfigurationError, ErrorContext
from .resampling import Sidedness
from .simulator import Scenario
from .test_registry import TestSettings

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "RECLUSTERING_CONFIG"
PROJECT_CONFIG_NAME = "reclustering.yml"


class ReclusteringConfig(BaseModel):
    """Resolved defaults for tests and simulations"""

    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    sided: Sidedness = "two"
    reps: int = Field(default=1000, ge=1)
    boot: int = Field(default=999, ge=1)
    mc_draws: int = Field(default=1000, ge=1)
    seed: int = Field(default=20250505, ge=0)
    threads: int = Field(default=1, ge=1)
    cv1_convention: Literal["paper", "textbook"] = "paper"
    mix_weights: Literal["paper", "unit-variance"] = "paper"
    exhaustive_cap: int = Field(default=10_000, ge=1)
    count_observed: bool = False
    fine_reorder: bool = False
    absorb_fine_fe: bool = True
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def check_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level '{v}'")
        return level

    def test_settings(self, **overrides: Any) -> TestSettings:
        """Battery settings from this configuration"""
        values: dict[str, Any] = {
            "alpha": self.alpha,
            "sided": self.sided,
            "reps": self.reps,
            "boot": self.boot,
            "mc_draws": self.mc_draws,
            "threads": self.threads,
            "cv1_convention": self.cv1_convention,
            "exhaustive_cap": self.exhaustive_cap,
            "count_observed": self.count_observed,
        }
        values.update(overrides)
        return TestSettings(**values)


class ConfigLoader:
    """Configuration file loader with hierarchy support"""

    @staticmethod
    def find_config_files() -> list[Path]:
        """Find configuration files, lowest precedence first"""
        config_files = []

        # 1. User config directory
        user_config = Path.home() / ".config" / "reclustering" / "config.yml"
        if user_config.exists():
            config_files.append(user_config)

        # 2. Current directory reclustering.yml
        project_config = Path.cwd() / PROJECT_CONFIG_NAME
        if project_config.exists():
            config_files.append(project_config)

        # 3. Environment variable specified config
        env_config_path = os.getenv(CONFIG_ENV_VAR)
        if env_config_path:
            env_config = Path(env_config_path)
            if not env_config.exists():
                raise ConfigurationError(
                    f"{CONFIG_ENV_VAR} points to a missing file: {env_config}",
                    config_key=CONFIG_ENV_VAR,
                )
            config_files.append(env_config)

        return config_files

    @staticmethod
    def load_config_from_file(config_path: Path) -> dict[str, Any]:
        """Load configuration from a single YAML file"""
        try:
            with open(config_path, encoding="utf-8") as f:
                config_data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(
                f"Invalid YAML in configuration file {config_path}: {e}",
                context=ErrorContext(file_path=str(config_path)),
            ) from e
        except OSError as e:
            raise ConfigurationError(
                f"Failed to load configuration from {config_path}: {e}",
                context=ErrorContext(file_path=str(config_path)),
            ) from e

        if config_data is None:
            return {}
        if not isinstance(config_data, dict):
            raise ConfigurationError(
                f"Configuration file {config_path} must contain a YAML dictionary",
                context=ErrorContext(file_path=str(config_path)),
            )
        return config_data

    @staticmethod
    def merge_configs(configs: list[dict[str, Any]]) -> dict[str, Any]:
        """Later configs override earlier ones key by key"""
        merged: dict[str, Any] = {}
        for config in configs:
            merged.update(config)
        return merged

    @classmethod
    def load_config(
        cls, config_path: Path | None = None
    ) -> tuple[ReclusteringConfig, list[Path]]:
        """Resolve the configuration and report which files it came from

        Raises:
            ConfigurationError: unreadable file, unknown key, or invalid value
        """
        config_files = cls.find_config_files()
        if config_path is not None:
            if not config_path.exists():
                raise ConfigurationError(
                    f"Configuration file not found: {config_path}",
                    context=ErrorContext(file_path=str(config_path)),
                )
            config_files.append(config_path)

        configs = [cls.load_config_from_file(path) for path in config_files]
        merged = cls.merge_configs(configs)
        logger.debug(f"Configuration sources: {[str(p) for p in config_files] or 'defaults'}")
        return cls.validate(merged, config_files), config_files

    @staticmethod
    def validate(values: dict[str, Any], sources: list[Path] | None = None) -> ReclusteringConfig:
        try:
            return ReclusteringConfig(**values)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
                for error in e.errors()
            )
            where = f" (from {', '.join(str(s) for s in sources)})" if sources else ""
            raise ConfigurationError(f"Invalid configuration{where}: {problems}") from e

    @staticmethod
    def create_default_config(config_path: Path) -> None:
        """Write a commented configuration file holding the defaults"""
        defaults = ReclusteringConfig().model_dump()
        lines = [
            "### reclustering configuration ###",
            "",
            "# Significance level and sidedness of every test decision",
        ]
        comments = {
            "sided": "# two, one (upper tail) or lower (one-sided, lower tail)",
            "reps": "# Random regroupings for the reclustering test",
            "boot": "# Wild cluster bootstrap resamples for the SV test",
            "mc_draws": "# Monte Carlo draws for the VMB and WCR tests",
            "seed": "# Master seed; every random draw derives from it",
            "threads": "# Worker threads for resampling blocks and processes for simulations",
            "cv1_convention": "# paper: factors applied to scores; textbook: applied once",
            "mix_weights": "# paper: 0.5/0.5 component weights; unit-variance: 1/sqrt(2)",
            "exhaustive_cap": "# Largest number of regroupings enumerated exactly",
            "count_observed": "# Count the observed grouping in the reference set",
            "fine_reorder": "# Also reorder fine-level simulated components within fine clusters",
            "absorb_fine_fe": "# Absorb fine-cluster fixed effects",
        }
        for key, value in defaults.items():
            if key in comments:
                lines.append(comments[key])
            lines.append(yaml.safe_dump({key: value}, default_flow_style=False).strip())
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _scenario_documents(path: Path) -> list[dict[str, Any]]:
    """Raw scenario documents from a YAML file: one scenario or a list under ``cells``"""
    data = ConfigLoader.load_config_from_file(path)
    if "cells" in data:
        cells = data["cells"]
        if set(data) != {"cells"} or not isinstance(cells, list):
            raise ConfigurationError(
                f"Scenario file {path} must hold either one scenario or only a 'cells' list",
                context=ErrorContext(file_path=str(path)),
            )
        if not all(isinstance(cell, dict) for cell in cells):
            raise ConfigurationError(
                f"Every entry under 'cells' in {path} must be a mapping",
                context=ErrorContext(file_path=str(path)),
            )
        return cells
    return [data]


def apply_config(scenario: Scenario, config: ReclusteringConfig) -> Scenario:
    """Fill the resampling and DGP settings a scenario leaves unset from the configuration"""
    inherited = {
        key: getattr(config, key)
        for key in ("alpha", "reps", "boot", "mc_draws", "absorb_fine_fe")
        if key not in scenario.model_fields_set
    }
    dgp_inherited = {
        key: getattr(config, key)
        for key in ("mix_weights", "fine_reorder")
        if key not in scenario.dgp.model_fields_set
    }
    inherited["dgp"] = scenario.dgp.model_copy(update=dgp_inherited)
    return scenario.model_copy(update=inherited)


def load_scenario_file(path: Path, config: ReclusteringConfig) -> list[Scenario]:
    """Scenarios of a YAML file, strictly parsed, with configuration defaults applied

    Raises:
        ConfigurationError: unreadable file, unknown key, or invalid value
    """
    scenarios = []
    for index, document in enumerate(_scenario_documents(path)):
        document.setdefault("name", f"{path.stem}-{index}")
        try:
            scenario = Scenario(**document)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
                for error in e.errors()
            )
            raise ConfigurationError(
                f"Invalid scenario {document['name']!r} in {path}: {problems}",
                context=ErrorContext(file_path=str(path), scenario_cell=str(document["name"])),
            ) from e
        scenarios.append(apply_config(scenario, config))
    return scenarios
