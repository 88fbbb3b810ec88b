"""
Pytest configuration and shared fixtures.
"""

import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bataxis.data import Dataset, SplitSpec, TimeSeriesSample, split
from bataxis.model import ModelConfig
from bataxis.synthetic import SyntheticSpec, generate_synthetic
from bataxis.train import TrainConfig

BAT_ENV_VARS = [
    "BAT_LOG_LEVEL", "BAT_LOG_COLOR", "BAT_LOG_JSON", "BAT_LOG_DIR", "BAT_LOG_FILE",
    "BAT_LOG_MAX_BYTES", "BAT_LOG_BACKUP_COUNT", "BAT_SEED", "BAT_OUT_DIR",
    "BAT_REPLICATIONS", "BAT_WORKERS",
]


def _drop_loggers():
    for logger in list(logging.Logger.manager.loggerDict.values()):
        if isinstance(logger, logging.Logger):
            for handler in logger.handlers[:]:
                logger.removeHandler(handler)
                handler.close()
    logging.Logger.manager.loggerDict.clear()
    logging.setLoggerClass(logging.Logger)


@pytest.fixture(autouse=True)
def reset_logging_state(tmp_path, monkeypatch):
    """
    Fresh logger registry per test, with log files under the test's tmp dir
    and plain (uncolored) console output.
    """
    _drop_loggers()
    monkeypatch.setenv("BAT_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("BAT_LOG_COLOR", "false")
    yield
    _drop_loggers()


@pytest.fixture
def clean_env(monkeypatch):
    """Remove every BAT_* variable for the duration of a test."""
    for var in BAT_ENV_VARS:
        monkeypatch.delenv(var, raising=False)
    yield


@pytest.fixture
def temp_out_dir(tmp_path):
    out = tmp_path / "runs"
    out.mkdir()
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mask_only_spec():
    return SyntheticSpec(n_samples=40, n_times=8, n_sensors=4, sparsity=0.5,
                         signal_mode="mask_only", seed=0, n_demographics=2, name="tiny")


@pytest.fixture
def tiny_dataset(mask_only_spec):
    return generate_synthetic(mask_only_spec)


@pytest.fixture
def tiny_splits(tiny_dataset):
    return split(tiny_dataset, SplitSpec(seed=0))


@pytest.fixture
def small_model_config():
    return ModelConfig(embed_dim=8, n_heads=2, n_layers=1, dropout=0.0, attention_dropout=0.0,
                       n_demographics=2, max_time=100.0)


@pytest.fixture
def fast_train_config():
    return TrainConfig(learning_rate=3e-3, batch_size=16, max_epochs=1, eval_batch_size=64)


def make_sample(n_times=5, n_sensors=3, label=0, seed=0, sample_id="s", source="default",
                missing=0.3, standardized=True, n_demographics=2):
    """Random sample with strictly increasing times and some missing cells."""
    gen = np.random.default_rng(seed)
    values = gen.standard_normal((n_times, n_sensors))
    values[gen.random((n_times, n_sensors)) < missing] = np.nan
    times = np.cumsum(gen.uniform(0.5, 1.5, n_times)) - 0.5
    return TimeSeriesSample(
        values=values,
        times=times,
        demographics=gen.standard_normal(n_demographics),
        label=label,
        sample_id=sample_id,
        source=source,
        standardized=standardized,
    )


def make_dataset(n_samples=12, n_times=5, n_sensors=3, n_classes=2, seed=0, name="handmade",
                 standardized=False, n_demographics=2):
    samples = [
        make_sample(n_times=n_times, n_sensors=n_sensors, label=i % n_classes, seed=seed + i,
                    sample_id=f"{name}-{i}", source=name, standardized=standardized,
                    n_demographics=n_demographics)
        for i in range(n_samples)
    ]
    return Dataset(
        name=name,
        samples=tuple(samples),
        sensor_names=tuple(f"s{d}" for d in range(n_sensors)),
        demographic_names=tuple(f"static_{p}" for p in range(n_demographics)),
        n_classes=n_classes,
    )
