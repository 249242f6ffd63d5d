"""CLI configuration."""

import json
import tomllib
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from integrated_abundance.exceptions import ConfigurationError, StorageError


class Settings(BaseSettings):
    """Run-time settings, overridable with IABUND_* environment variables or a .env file."""

    model_config = SettingsConfigDict(env_prefix="IABUND_", env_file=".env", extra="ignore")

    # Default process pool size for chains and study replicates
    workers: int = 1

    # Logging
    log_dir: Optional[Path] = None
    log_level: str = "INFO"

    # Stamp manifests with the wall clock (SOURCE_DATE_EPOCH still wins)
    wall_clock: bool = False


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """
    Read a TOML or JSON configuration file.

    Args:
        path: File path, or None for an empty configuration

    Returns:
        Parsed mapping

    Raises:
        StorageError: If the file cannot be read
        ConfigurationError: If it cannot be parsed
    """
    if path is None:
        return {}
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read config file {path}: {e}")

    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        elif path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            raise ConfigurationError(f"config file {path} must be .toml or .json")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"cannot parse config file {path}: {e}")

    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must contain a table of settings")
    return data


def layer(defaults: Dict[str, Any], file_values: Dict[str, Any], inline: Dict[str, Any]):
    """
    Merge configuration layers: inline flag > config file > defaults.

    Returns:
        (merged values, source of each key)
    """
    merged: Dict[str, Any] = {}
    sources: Dict[str, str] = {}
    for name, values in (("default", defaults), ("file", file_values), ("flag", inline)):
        for key, value in values.items():
            if value is None:
                continue
            merged[key] = value
            sources[key] = name
    return merged, sources
