"""
Package loggers.

    from bataxis.logger import get_logger

    log = get_logger("bataxis.train")
    log.info("epoch 3 loss=0.412")

Every name maps to one ``RunLogger`` with a console handler and a rotating
file handler. Settings come from ``load_settings`` (env, .env, bataxis.yaml);
keyword overrides passed on the first ``get_logger`` call for a name win.
Later calls return the same instance and ignore their overrides.
"""

import contextlib
import logging
import threading
from typing import Any, Dict, Iterator, Optional, Union

from .config import load_settings
from .errors import ConfigError
from .filters import RunContextFilter
from .formatter import get_formatter
from .handler import get_handlers

_VALID_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL", "NOTSET"}
_registry_lock = threading.Lock()

# kwargs waiting for RunLogger.__init__, which logging.getLogger() calls with only a name
_init_kwargs: Dict[str, dict] = {}


def _normalize_level(level: Union[int, str]) -> Union[int, str]:
    if isinstance(level, bool):
        raise TypeError(f"level must be a log-level str or int, got {level!r} (bool)")
    if isinstance(level, str):
        upper = level.upper()
        if upper not in _VALID_LEVELS:
            raise ConfigError(f"level must be one of {sorted(_VALID_LEVELS)}, got {level!r}")
        return upper
    if not isinstance(level, int):
        raise TypeError(f"level must be a log-level str or int, got {level!r} ({type(level).__name__})")
    return level


class RunLogger(logging.Logger):
    """logging.Logger with console + rotating file output configured from settings."""

    def __init__(self, name: str, level: Union[int, str] = logging.NOTSET):
        super().__init__(name, _normalize_level(level))
        self.settings: Dict[str, Any] = {}
        overrides = _init_kwargs.pop(name, None) or {}
        self.configure(**overrides)

    def configure(
        self,
        level: Optional[Union[int, str]] = None,
        log_dir: Optional[str] = None,
        file: Optional[str] = None,
        color: Optional[bool] = None,
        json_mode: Optional[bool] = None,
        max_bytes: Optional[int] = None,
        backup_count: Optional[int] = None,
        config_dir: Optional[str] = None,
        env_file: Optional[str] = None,
        yaml_file: Optional[str] = None,
    ) -> "RunLogger":
        """
        Load settings, apply explicit overrides and attach handlers.

        When JSON mode and color are both on, color wins and JSON mode is
        switched off.
        """
        if self.handlers:
            return self

        for param, value in (("log_dir", log_dir), ("file", file), ("config_dir", config_dir),
                             ("env_file", env_file), ("yaml_file", yaml_file)):
            if value is not None and not isinstance(value, str):
                raise TypeError(f"{param} must be a str, got {value!r} ({type(value).__name__})")
        for param, value in (("color", color), ("json_mode", json_mode)):
            if value is not None and not isinstance(value, bool):
                raise TypeError(f"{param} must be True or False, got {value!r} ({type(value).__name__})")
        for param, value, min_val in (("max_bytes", max_bytes, 1), ("backup_count", backup_count, 0)):
            if value is not None:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError(f"{param} must be an int, got {value!r} ({type(value).__name__})")
                if value < min_val:
                    raise ConfigError(f"{param} must be >= {min_val}, got {value!r}")
        if level is not None:
            level = _normalize_level(level)

        self.settings = load_settings(config_dir=config_dir, env_file=env_file, yaml_file=yaml_file)
        overrides = {
            "level": level,
            "log_dir": log_dir,
            "file": file,
            "color": color,
            "json_mode": json_mode,
            "max_bytes": max_bytes,
            "backup_count": backup_count,
        }
        for key, value in overrides.items():
            if value is not None:
                self.settings[key] = value

        if self.settings.get("json_mode") and self.settings.get("color"):
            self.settings["json_mode"] = False

        self.setLevel(_normalize_level(self.settings.get("level", logging.INFO)))
        self.propagate = False
        self._build()
        return self

    def _build(self) -> None:
        for handler in get_handlers(self.settings):
            if isinstance(handler, logging.FileHandler) or not isinstance(handler, logging.StreamHandler):
                formatter = get_formatter(self.settings.get("json_mode"), False)
            else:
                formatter = get_formatter(self.settings.get("json_mode"), self.settings.get("color"))
            handler.setLevel(self.level)
            handler.setFormatter(formatter)
            self.addHandler(handler)

    def close(self) -> None:
        for handler in self.handlers[:]:
            self.removeHandler(handler)
            handler.close()


class RunContextAdapter(logging.LoggerAdapter):
    """
    Attach key=value context to every message.

    Text mode prefixes the message (``replication=2 seed=7 | epoch 3 ...``);
    JSON mode merges the fields into the record instead.
    """

    def process(self, msg: str, kwargs: Dict[str, Any]) -> tuple:
        settings = getattr(self.logger, "settings", {})
        if settings.get("json_mode"):
            kwargs["extra"] = {**self.extra, **kwargs.get("extra", {})}
            return msg, kwargs
        context = " ".join(f"{k}={v}" for k, v in self.extra.items())
        return (f"{context} | {msg}" if context else msg), kwargs


def get_logger(name: str = "bataxis", **overrides) -> RunLogger:
    """Same configured RunLogger for every call with the same name."""
    with _registry_lock:
        existing = logging.Logger.manager.loggerDict.get(name)
        if isinstance(existing, RunLogger):
            return existing
        if overrides:
            _init_kwargs[name] = overrides
        previous = logging.getLoggerClass()
        logging.setLoggerClass(RunLogger)
        try:
            logger = logging.getLogger(name)
        finally:
            logging.setLoggerClass(previous)
            _init_kwargs.pop(name, None)
    if not isinstance(logger, RunLogger):
        raise TypeError(f"logger {name!r} already exists as a plain logging.Logger")
    return logger


@contextlib.contextmanager
def run_context(logger: logging.Logger, config_hash: Optional[str] = None,
                replication: Optional[int] = None, seed: Optional[int] = None) -> Iterator[RunContextFilter]:
    """Stamp run context onto everything ``logger``'s handlers emit inside the block."""
    context = RunContextFilter(config_hash, replication, seed)
    for handler in logger.handlers:
        handler.addFilter(context)
    try:
        yield context
    finally:
        for handler in logger.handlers:
            handler.removeFilter(context)
