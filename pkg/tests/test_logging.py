"""
Tests for package loggers, run context and formatters.
"""

import json
import logging
import os

import pytest

from bataxis.errors import ConfigError
from bataxis.filters import RunContextFilter
from bataxis.formatter import CompactJsonFormatter, PlainRunFormatter, RunFormatter, get_formatter
from bataxis.logger import RunContextAdapter, RunLogger, get_logger, run_context


@pytest.fixture
def log_record():
    """Factory for bare log records."""
    def _create_record(message, **extra):
        record = logging.LogRecord(
            name="bataxis.test",
            level=logging.INFO,
            pathname="test.py",
            lineno=7,
            msg=message,
            args=(),
            exc_info=None,
        )
        for key, value in extra.items():
            setattr(record, key, value)
        return record
    return _create_record


def _read_log(log, tmp_path, name="bataxis.log"):
    for handler in log.handlers:
        handler.flush()
    return (tmp_path / "logs" / name).read_text(encoding="utf-8")


class TestGetLogger:
    """Tests for the named logger registry."""

    def test_returns_run_logger_with_two_handlers(self):
        """A fresh name gets a file handler and a console handler."""
        log = get_logger("bataxis.test.basic")
        assert isinstance(log, RunLogger)
        assert len(log.handlers) == 2
        assert log.propagate is False

    def test_same_name_same_instance(self):
        """Later calls reuse the logger and ignore their overrides."""
        first = get_logger("bataxis.test.same", level="DEBUG")
        second = get_logger("bataxis.test.same", level="ERROR")
        assert first is second
        assert second.level == logging.DEBUG
        assert len(second.handlers) == 2

    def test_writes_to_log_dir(self, tmp_path):
        """Messages land in BAT_LOG_DIR/bataxis.log."""
        log = get_logger("bataxis.test.file")
        log.info("epoch 1 loss=0.5")
        assert "epoch 1 loss=0.5" in _read_log(log, tmp_path)

    def test_file_override(self, tmp_path):
        log = get_logger("bataxis.test.custom", file="custom.log")
        log.warning("written elsewhere")
        assert "written elsewhere" in _read_log(log, tmp_path, "custom.log")

    def test_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("BAT_LOG_LEVEL", "warning")
        log = get_logger("bataxis.test.env_level")
        assert log.level == logging.WARNING

    def test_color_wins_over_json(self):
        """Color and JSON together switch JSON off."""
        log = get_logger("bataxis.test.conflict", color=True, json_mode=True)
        assert log.settings["json_mode"] is False
        console = [h for h in log.handlers if type(h) is logging.StreamHandler][0]
        assert isinstance(console.formatter, RunFormatter)

    def test_file_output_is_never_colored(self, tmp_path):
        log = get_logger("bataxis.test.nocolor", color=True)
        log.info("plain please")
        assert "\033[" not in _read_log(log, tmp_path)

    @pytest.mark.parametrize("kwargs,error", [
        ({"level": "LOUD"}, ConfigError),
        ({"level": True}, TypeError),
        ({"color": "yes"}, TypeError),
        ({"max_bytes": 0}, ConfigError),
        ({"log_dir": 3}, TypeError),
    ])
    def test_invalid_overrides(self, kwargs, error):
        with pytest.raises(error):
            get_logger("bataxis.test.invalid", **kwargs)

    def test_plain_logger_name_conflict(self):
        logging.getLogger("bataxis.test.plain")
        with pytest.raises(TypeError, match="plain"):
            get_logger("bataxis.test.plain")

    def test_close_removes_handlers(self):
        log = get_logger("bataxis.test.close")
        log.close()
        assert log.handlers == []


class TestRunContextAdapter:
    """Tests for key=value message context."""

    def test_context_prepended_in_text_mode(self):
        """Context fields prefix the message."""
        log = get_logger("bataxis.test.adapter")
        messages = []
        original_handle = log.handle

        def capture_handle(record):
            messages.append(record.getMessage())
            return original_handle(record)

        log.handle = capture_handle
        RunContextAdapter(log, {"replication": 2, "seed": 7}).info("epoch 3")
        assert messages == ["replication=2 seed=7 | epoch 3"]

    def test_empty_context(self):
        log = get_logger("bataxis.test.adapter_empty")
        assert RunContextAdapter(log, {}).process("hello", {}) == ("hello", {})

    def test_json_mode_merges_fields(self, tmp_path):
        """JSON records carry context as fields, not as a prefix."""
        log = get_logger("bataxis.test.adapter_json", json_mode=True, color=False)
        RunContextAdapter(log, {"replication": 1, "seed": 4}).info("done")
        record = json.loads(_read_log(log, tmp_path).strip().splitlines()[-1])
        assert record["message"] == "done"
        assert record["replication"] == 1
        assert record["seed"] == 4


class TestRunContext:
    """Tests for RunContextFilter and the run_context block."""

    def test_filter_fills_missing_fields(self, log_record):
        record = log_record("hi", replication=3)
        assert RunContextFilter("abc123", 0, 11).filter(record) is True
        assert record.config_hash == "abc123"
        assert record.replication == 3
        assert record.seed == 11

    def test_block_stamps_and_then_detaches(self, tmp_path):
        log = get_logger("bataxis.test.run_context", json_mode=True, color=False)
        with run_context(log, config_hash="feedbeef0123"):
            log.info("inside")
        log.info("outside")
        inside, outside = (json.loads(line) for line in _read_log(log, tmp_path).strip().splitlines()[-2:])
        assert inside["config_hash"] == "feedbeef0123"
        assert "config_hash" not in outside
        assert all(not h.filters for h in log.handlers)

    def test_adapter_inside_block(self, tmp_path):
        log = get_logger("bataxis.test.nested", json_mode=True, color=False)
        with run_context(log, config_hash="0123456789ab"):
            RunContextAdapter(log, {"replication": 2, "seed": 9}).info("nested")
        record = json.loads(_read_log(log, tmp_path).strip().splitlines()[-1])
        assert (record["config_hash"], record["replication"], record["seed"]) == ("0123456789ab", 2, 9)


class TestFormatter:
    """Tests for formatter selection and output."""

    def test_selection(self):
        assert isinstance(get_formatter(json_mode=True), CompactJsonFormatter)
        assert isinstance(get_formatter(color=False), PlainRunFormatter)
        assert isinstance(get_formatter(), RunFormatter)

    def test_plain_line(self, log_record):
        line = get_formatter(color=False).format(log_record("val_auroc=0.91"))
        assert "| INFO     |" in line
        assert "bataxis.test" in line
        assert line.endswith("val_auroc=0.91")
        assert "\033[" not in line

    def test_plain_line_carries_config_hash(self, log_record):
        line = get_formatter(color=False).format(log_record("start", config_hash="feedbeef0123"))
        assert ":7 [feedbeef0123] - start" in line

    def test_colored_line(self, log_record):
        assert "\033[32m" in get_formatter().format(log_record("green"))

    def test_json_payload(self, log_record):
        payload = json.loads(get_formatter(json_mode=True).format(log_record("x", config_hash=None, seed=5)))
        assert payload["level"] == "INFO"
        assert payload["line"] == 7
        assert payload["seed"] == 5
        assert "config_hash" not in payload

    def test_log_dir_is_created(self, tmp_path, monkeypatch):
        target = tmp_path / "deep" / "logs"
        monkeypatch.setenv("BAT_LOG_DIR", str(target))
        get_logger("bataxis.test.mkdir").info("x")
        assert os.path.isdir(target)
