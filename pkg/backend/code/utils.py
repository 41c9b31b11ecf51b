import hashlib
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Union

import yaml

from backend.code.paths import APP_CONFIG_FPATH


@lru_cache(maxsize=None)
def load_yaml_config_cached(file_path: str) -> dict:
    """Cached version of YAML config loading."""
    file_path = Path(file_path)

    if not file_path.exists():
        raise FileNotFoundError(f"YAML config file not found: {file_path}")
    try:
        with open(file_path, "r", encoding="utf-8") as file:
            return yaml.safe_load(file) or {}
    except yaml.YAMLError as e:
        raise yaml.YAMLError(f"Error parsing YAML file: {e}") from e
    except IOError as e:
        raise IOError(f"Error reading YAML file: {e}") from e


def load_yaml_config(file_path: Union[str, Path]) -> dict:
    """Load YAML config with caching for performance."""
    return load_yaml_config_cached(str(file_path))


def load_app_config() -> dict:
    return load_yaml_config(APP_CONFIG_FPATH)


def config_section(name: str) -> dict:
    """One top-level section of config.yaml, empty when absent."""
    return dict(load_app_config().get(name) or {})


def load_flat_config(file_path: Union[str, Path]) -> dict:
    """
    Load an experiment file: a flat key-value YAML mapping.

    Nested values are rejected so the file stays replayable from the CLI.
    """
    with open(file_path, "r", encoding="utf-8") as f:
        loaded = yaml.safe_load(f) or {}
    if not isinstance(loaded, dict):
        raise ValueError(f"experiment file {file_path} must be a key-value mapping")
    for key, value in loaded.items():
        if isinstance(value, (dict, list)):
            raise ValueError(f"experiment file key '{key}' must hold a scalar value")
    return loaded


def config_hash(flat_config: Mapping[str, Any]) -> str:
    """
    Short stable hash of a resolved flat config.

    Returns:
        12-character hex digest of the canonical JSON form
    """
    canonical = json.dumps(dict(flat_config), sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
