import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from dotenv import dotenv_values

from .errors import ConfigError

CONFIG_FILE = "bataxis.yaml"
ENV_FILE = ".env"
RESOLVED_CONFIG_FILE = "resolved_config.json"

_VALID_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL", "NOTSET"}


def _resolve_path(path: Optional[str]) -> Optional[Path]:
    if not path:
        return None
    resolved = Path(path).expanduser()
    return resolved if resolved.is_file() else None


def _resolve_config_dir(config_dir: Optional[str]) -> Path:
    if config_dir:
        candidate = Path(config_dir).expanduser()
        if candidate.is_dir():
            return candidate.resolve()
    return Path.cwd().resolve()


def _as_bool(key: str, value, default: bool) -> bool:
    """Only True/False or the strings 'true'/'false' are accepted."""
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        s = value.strip().lower()
        if s == "true":
            return True
        if s == "false":
            return False
    raise ConfigError(f"{key} must be true or false, got {value!r} ({type(value).__name__})")


def _as_int(key: str, value, default: int, min_val: int = 0) -> int:
    if value is None:
        return default
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be an integer, got {value!r} (bool)")
    try:
        result = int(value)
    except (ValueError, TypeError):
        raise ConfigError(f"{key} must be an integer, got {value!r} ({type(value).__name__})")
    if result < min_val:
        raise ConfigError(f"{key} must be >= {min_val}, got {result!r}")
    return result


def load_settings(
    config_dir: Optional[str] = None,
    env_file: Optional[str] = None,
    yaml_file: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Runtime settings for logging and experiment defaults.

    Priority (highest wins): process env > .env > bataxis.yaml > defaults.
    Explicit keyword overrides are applied by the callers on top of this.
    """
    base_dir = _resolve_config_dir(config_dir)

    env_path = _resolve_path(env_file) or (base_dir / ENV_FILE if (base_dir / ENV_FILE).is_file() else None)
    env_values = dotenv_values(env_path) if env_path else {}

    yaml_config: Dict[str, Any] = {}
    yaml_path = _resolve_path(yaml_file) or (
        base_dir / CONFIG_FILE if (base_dir / CONFIG_FILE).is_file() else None
    )
    if yaml_path:
        with open(yaml_path, encoding="utf-8") as f:
            yaml_config = yaml.safe_load(f) or {}
        if not isinstance(yaml_config, dict):
            raise ConfigError(f"{yaml_path} must hold a mapping, got {type(yaml_config).__name__}")

    def _resolve_value(key: str, default):
        return os.getenv(key, env_values.get(key, yaml_config.get(key, default)))

    settings: Dict[str, Any] = {}

    level = _resolve_value("BAT_LOG_LEVEL", "INFO")
    if isinstance(level, str) and level.upper() not in _VALID_LEVELS:
        raise ConfigError(f"BAT_LOG_LEVEL must be one of {sorted(_VALID_LEVELS)}, got {level!r}")
    settings["level"] = level.upper() if isinstance(level, str) else level

    settings["color"] = _as_bool("BAT_LOG_COLOR", _resolve_value("BAT_LOG_COLOR", True), True)
    settings["json_mode"] = _as_bool("BAT_LOG_JSON", _resolve_value("BAT_LOG_JSON", False), False)

    settings["max_bytes"] = _as_int("BAT_LOG_MAX_BYTES", _resolve_value("BAT_LOG_MAX_BYTES", 10_000_000), 10_000_000, min_val=1)
    settings["backup_count"] = _as_int("BAT_LOG_BACKUP_COUNT", _resolve_value("BAT_LOG_BACKUP_COUNT", 5), 5, min_val=0)
    settings["seed"] = _as_int("BAT_SEED", _resolve_value("BAT_SEED", 0), 0, min_val=0)
    settings["replications"] = _as_int("BAT_REPLICATIONS", _resolve_value("BAT_REPLICATIONS", 5), 5, min_val=1)
    settings["workers"] = _as_int("BAT_WORKERS", _resolve_value("BAT_WORKERS", 1), 1, min_val=1)

    settings["log_dir"] = str(_resolve_value("BAT_LOG_DIR", "logs"))
    settings["file"] = str(_resolve_value("BAT_LOG_FILE", "bataxis.log"))
    settings["out_dir"] = str(_resolve_value("BAT_OUT_DIR", "runs"))
    return settings


# ---------------------------------------------------------------------------
# Experiment files
# ---------------------------------------------------------------------------

def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """JSON or YAML mapping; YAML's loader reads both."""
    path = Path(path).expanduser()
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(data: Dict[str, Any]) -> str:
    """First 12 hex characters of SHA-256 over the sorted-key JSON form."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:12]


def load_experiment_config(path: Union[str, Path]):
    from .experiments import ExperimentConfig

    return ExperimentConfig.from_dict(read_config_file(path))


def write_resolved_config(resolved: Dict[str, Any], out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / RESOLVED_CONFIG_FILE
    target.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target
