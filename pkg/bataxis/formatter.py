import json
import logging

from pythonjsonlogger import jsonlogger

LEVEL_COLORS = {
    "DEBUG":    "\033[36m",
    "INFO":     "\033[32m",
    "WARNING":  "\033[33m",
    "ERROR":    "\033[31m",
    "CRITICAL": "\033[1;31m",
}
RESET = "\033[0m"
BLUE = "\033[34m"
GREY = "\033[90m"
DATEFMT = "%Y-%m-%d %H:%M:%S"

# Stamped by RunContextFilter; shown in JSON records when set.
CONTEXT_FIELDS = ("config_hash", "replication", "seed")
_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


def _run_tag(record) -> str:
    digest = getattr(record, "config_hash", None)
    return f" [{digest}]" if digest else ""


def _format_line(record, datefmt, color=True):
    """``time | LEVEL | logger:func:line [config_hash] - message``"""
    dt = logging.Formatter(datefmt=datefmt).formatTime(record, datefmt)
    level = record.levelname.ljust(8)
    location = f"{record.name}:{record.funcName}:{record.lineno}"
    tag = _run_tag(record)
    message = record.getMessage()

    if not color:
        return f"{dt} | {level} | {location}{tag} - {message}"

    level_color = LEVEL_COLORS.get(record.levelname, "")
    return (
        f"{GREY}{dt}{RESET} | {level_color}{level}{RESET} | "
        f"{BLUE}{location}{RESET}{GREY}{tag}{RESET} - {level_color}{message}{RESET}"
    )


class RunFormatter(logging.Formatter):
    """Console default: level-colored line."""

    def format(self, record):
        return _format_line(record, self.datefmt, color=True)


class PlainRunFormatter(logging.Formatter):
    def format(self, record):
        return _format_line(record, self.datefmt, color=False)


class CompactJsonFormatter(jsonlogger.JsonFormatter):
    """One JSON object per record, with run context and adapter extras merged in."""

    def format(self, record):
        func = record.filename.replace(".py", "") if record.funcName == "<module>" else record.funcName
        payload = {
            "timestamp": logging.Formatter(datefmt=self.datefmt).formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "function": func,
            "line": record.lineno,
        }
        for key, value in vars(record).items():
            if key in _RESERVED or key.startswith("_"):
                continue
            if key in CONTEXT_FIELDS and value is None:
                continue
            payload[key] = value
        payload["message"] = record.getMessage()
        return json.dumps(payload, ensure_ascii=False, default=str)


def get_formatter(json_mode=False, color=True):
    if json_mode:
        formatter = CompactJsonFormatter()
        formatter.datefmt = DATEFMT
        return formatter
    if color is False:
        return PlainRunFormatter(datefmt=DATEFMT)
    return RunFormatter(datefmt=DATEFMT)
