# Copyright (c) 2024. All rights reserved.
"""Configuration management for the synchronization-rate toolkit."""

import logging
import os
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Logger for this module
logger = logging.getLogger("syncrate.config")


class LoggingConfig(BaseModel):
    """Logging configuration."""
    level: str = Field(default="INFO")
    file: str | None = Field(default=None)


class MetricsConfig(BaseModel):
    """Operation metrics collection configuration."""
    enabled: bool = Field(default=True, description="Enable/disable metrics collection")
    directory: str = Field(default="metrics", description="Directory to store metrics files")


class HarnessConfig(BaseModel):
    """Experiment runner configuration."""
    workers: int = Field(default=1, ge=1, description="Parallel sweep cells")
    presets_dir: str = Field(
        default="config/presets",
        description="Directory holding preset documents (relative to project root)"
    )
    output_dir: str = Field(default="results", description="Default directory for result tables")


class SolverConfig(BaseModel):
    """Obj. 1 solver defaults."""
    brute_force_cap: int = Field(
        default=10_000_000,
        ge=1,
        description="Maximum number of selections enumerated by the brute-force solver"
    )
    fptas_eps: float = Field(default=0.1, gt=0.0, lt=1.0)


class LearnerDefaults(BaseModel):
    """Stochastic Greedy defaults used when an experiment omits them."""
    sigma: int = Field(default=2, ge=1)
    tau: int = Field(default=4, ge=1)


class AppConfig(BaseModel):
    """Application configuration."""
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    harness: HarnessConfig = Field(default_factory=HarnessConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    learner: LearnerDefaults = Field(default_factory=LearnerDefaults)


# Environment variable -> (section, key)
_ENV_OVERRIDES: dict[str, tuple[str, str]] = {
    "SYNCRATE_LOG_LEVEL": ("logging", "level"),
    "SYNCRATE_LOG_FILE": ("logging", "file"),
    "SYNCRATE_METRICS_DIR": ("metrics", "directory"),
    "SYNCRATE_WORKERS": ("harness", "workers"),
    "SYNCRATE_PRESETS_DIR": ("harness", "presets_dir"),
}


def load_config(config_path: str | Path | None = None) -> AppConfig:
    """Load configuration from YAML file and environment variables.

    Args:
        config_path: Path to config.yaml. Defaults to config/config.yaml.

    Returns:
        AppConfig instance with merged configuration.
    """
    load_dotenv()
    logger.debug("Loaded environment variables from .env file")

    if config_path is None:
        config_path = get_project_root() / "config" / "config.yaml"
    else:
        config_path = Path(config_path)

    logger.debug(f"Loading configuration from: {config_path}")

    config_data: dict[str, Any] = {}
    if config_path.exists():
        with open(config_path, "r", encoding="utf-8") as f:
            config_data = yaml.safe_load(f) or {}
        logger.debug(f"Loaded YAML config with keys: {list(config_data.keys())}")
    else:
        logger.warning(f"Config file not found: {config_path}, using defaults")

    # Environment variables take precedence
    for env_name, (section, key) in _ENV_OVERRIDES.items():
        value = os.getenv(env_name)
        if value:
            config_data.setdefault(section, {})[key] = value
            logger.debug(f"Using {env_name} from environment: {value}")

    config = AppConfig(**config_data)
    logger.info(
        f"Configuration loaded: log_level={config.logging.level}, "
        f"workers={config.harness.workers}, presets={config.harness.presets_dir}"
    )
    return config


# Global config instance (lazy loaded)
_config: AppConfig | None = None


def get_config() -> AppConfig:
    """Get the global configuration instance.

    Returns:
        AppConfig instance.
    """
    global _config
    if _config is None:
        _config = load_config()
    return _config


def reload_config(config_path: str | Path | None = None) -> AppConfig:
    """Reload configuration from disk.

    This clears the cached config and reloads from config.yaml.

    Returns:
        Newly loaded AppConfig instance.
    """
    global _config
    logger.info("Reloading configuration from disk")
    _config = load_config(config_path)
    return _config


def get_project_root() -> Path:
    """Get the project root directory."""
    return Path(__file__).parent.parent


def resolve_path(path: str | Path) -> Path:
    """Resolve a configured path; relative paths are taken from the project root."""
    path = Path(path)
    if path.is_absolute():
        return path
    return get_project_root() / path


def load_yaml_document(path: str | Path) -> dict[str, Any]:
    """Read a YAML mapping document.

    Args:
        path: Location of the document.

    Returns:
        The parsed mapping (empty if the document is empty).
    """
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level, got {type(data).__name__}")
    logger.debug(f"Loaded YAML document {path} with keys: {list(data.keys())}")
    return data
