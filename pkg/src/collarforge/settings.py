"""
Run settings. Each value comes from the command line flag, else the
environment, else `config.yml` in the config directory, else the default.
"""

import logging
import os
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from collarforge.convergence import GHMode
from collarforge.errors import InputError
from collarforge.seeley import DEFAULT_ORDER, MAX_ORDER

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path("~/.config/collarforge")
CONFIG_FILE = "config.yml"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

# Environment variables read for each setting.
ENVIRONMENT = {"seed": "COLLARFORGE_SEED", "log_level": "COLLARFORGE_LOG_LEVEL"}


@dataclass(frozen=True, kw_only=True)
class Settings:
    seed: int = 0
    log_level: str = "INFO"
    tolerance: float = 1e-6
    seeley_order: int = DEFAULT_ORDER
    depth: float | None = None
    net_count: int = 9
    gh_mode: GHMode = GHMode.EXACT
    config_dir: Path | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise InputError(f"seed must be >= 0, got {self.seed}")
        if self.log_level not in LOG_LEVELS:
            raise InputError(f"log_level must be one of {LOG_LEVELS}")
        if not self.tolerance > 0:
            raise InputError(f"tolerance must be > 0, got {self.tolerance}")
        if not 0 <= self.seeley_order <= MAX_ORDER:
            raise InputError(f"seeley_order must lie in [0, {MAX_ORDER}]")
        if self.depth is not None and not self.depth > 0:
            raise InputError(f"depth must be > 0, got {self.depth}")
        if self.net_count < 1:
            raise InputError(f"net_count must be >= 1, got {self.net_count}")

    def to_document(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "tolerance": self.tolerance,
            "seeley_order": self.seeley_order,
            "depth": self.depth,
            "net_count": self.net_count,
            "gh_mode": str(self.gh_mode),
        }


_PARSERS: dict[str, Callable[[Any], Any]] = {
    "seed": int,
    "log_level": lambda value: str(value).upper(),
    "tolerance": float,
    "seeley_order": int,
    "depth": float,
    "net_count": int,
    "gh_mode": GHMode,
}


def resolve_config_dir(flag: Path | None = None) -> Path:
    if flag is not None:
        return flag.expanduser().resolve()
    if env := os.environ.get("COLLARFORGE_CONFIG_DIR"):
        return Path(env).expanduser().resolve()
    return DEFAULT_CONFIG_DIR.expanduser()


def read_yaml(path: Path) -> dict[str, Any]:
    """Contents of a YAML mapping; {} when the file is missing or empty."""
    if path.exists():
        with open(path) as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise InputError(f"{path} is not valid YAML: {e}") from e
        if data is not None:
            if not isinstance(data, dict):
                raise InputError(f"{path} must hold a mapping of settings")
            return data
    return {}


def _parse(values: dict[str, Any], where: str) -> dict[str, Any]:
    parsed = {}
    for key, value in values.items():
        if key not in _PARSERS:
            raise InputError(f"unknown setting {key!r} in {where}")
        if value is None:
            continue
        try:
            parsed[key] = _PARSERS[key](value)
        except (TypeError, ValueError) as e:
            raise InputError(f"bad value {value!r} for {key} in {where}") from e
    return parsed


def load_settings(config_dir: Path | None = None, **flags: Any) -> Settings:
    """Settings for one run; `flags` holds command line values, None when unset."""
    directory = resolve_config_dir(config_dir)
    path = directory / CONFIG_FILE
    from_file = _parse(read_yaml(path), str(path))
    from_env = _parse(
        {
            key: os.environ[name]
            for key, name in ENVIRONMENT.items()
            if os.environ.get(name)
        },
        "the environment",
    )
    from_flags = _parse(flags, "the command line")
    merged = from_file | from_env | from_flags
    settings = Settings(**merged, config_dir=directory)
    logger.debug(f"settings from {directory}: {settings}")
    return settings

