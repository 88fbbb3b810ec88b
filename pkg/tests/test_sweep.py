"""
Tests for random hyperparameter search.
"""

import threading

import numpy as np
import pytest

from bataxis.errors import ConfigError, SweepError
from bataxis.sweep import SweepSpec, apply_trial, map_jobs, random_sweep, sample_trials


class TestSweepSpec:
    """Validation of search ranges."""

    @pytest.mark.parametrize("ranges", [
        {},
        {"optimizer": [1, 2]},
        {"dropout": []},
        {"dropout": {"low": 0.5, "high": 0.1}},
        {"learning_rate": {"low": 0.0, "high": 0.1, "log": True}},
        {"learning_rate": {"low": 0.1}},
        {"n_heads": 4},
    ])
    def test_invalid_ranges(self, ranges):
        with pytest.raises(ConfigError):
            SweepSpec(ranges=ranges)

    def test_counts_must_be_positive(self):
        with pytest.raises(ConfigError):
            SweepSpec(ranges={"dropout": [0.1]}, n_trials=0)

    def test_dict_round_trip(self):
        spec = SweepSpec(ranges={"dropout": [0.1, 0.2], "learning_rate": {"low": 1e-4, "high": 1e-2, "log": True}},
                         n_trials=3, replications=2, seed=4)
        assert SweepSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError, match="unknown"):
            SweepSpec.from_dict({"ranges": {"dropout": [0.1]}, "budget": 3})


class TestSampling:
    """Trial draws."""

    def test_draws_stay_in_range(self):
        spec = SweepSpec(ranges={
            "dropout": {"low": 0.0, "high": 0.3},
            "learning_rate": {"low": 1e-4, "high": 1e-2, "log": True},
            "n_layers": {"low": 1, "high": 3},
            "pool": ["mean", "max"],
        }, n_trials=50, seed=1)
        trials = sample_trials(spec)
        assert len(trials) == 50
        for trial in trials:
            assert 0.0 <= trial["dropout"] <= 0.3
            assert 1e-4 <= trial["learning_rate"] <= 1e-2
            assert trial["n_layers"] in (1, 2, 3) and isinstance(trial["n_layers"], int)
            assert trial["pool"] in ("mean", "max")

    def test_same_seed_same_trials(self):
        spec = SweepSpec(ranges={"dropout": {"low": 0.0, "high": 0.5}}, n_trials=5, seed=3)
        assert sample_trials(spec) == sample_trials(spec)
        other = SweepSpec(ranges={"dropout": {"low": 0.0, "high": 0.5}}, n_trials=5, seed=4)
        assert sample_trials(spec) != sample_trials(other)

    def test_apply_trial_routes_keys(self, small_model_config, fast_train_config):
        model_cfg, train_cfg = apply_trial({"n_heads": 4, "batch_size": 8}, small_model_config,
                                           fast_train_config)
        assert model_cfg.n_heads == 4
        assert train_cfg.batch_size == 8
        assert model_cfg.embed_dim == small_model_config.embed_dim


class TestMapJobs:
    """Ordered, optionally threaded execution."""

    def test_order_preserved_with_threads(self):
        assert map_jobs(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]

    def test_serial_runs_on_calling_thread(self):
        caller = threading.get_ident()
        assert map_jobs(lambda _: threading.get_ident(), range(3)) == [caller] * 3


class TestRandomSweep:
    """Tests for random_sweep on a tiny corpus."""

    def test_table_and_winner(self, tiny_dataset, small_model_config, fast_train_config):
        spec = SweepSpec(ranges={"learning_rate": [1e-3, 3e-3]}, n_trials=2, replications=2, seed=0)
        result = random_sweep(spec, tiny_dataset, small_model_config, fast_train_config)
        assert list(result.table["trial"]) == [0, 0, 1, 1]
        assert list(result.table["replication"]) == [0, 1, 0, 1]
        assert set(result.table["status"]) == {"ok"}
        assert list(result.summary["trial"]) == [0, 1]
        scores = result.summary["val_auroc"].fillna(-np.inf).to_numpy()
        assert result.best_trial == int(np.argmax(scores))
        assert result.best_params == sample_trials(spec)[result.best_trial]

    def test_invalid_trials_are_recorded(self, tiny_dataset, small_model_config, fast_train_config):
        spec = SweepSpec(ranges={"n_heads": [2, 3]}, n_trials=6, replications=1, seed=2)
        trials = sample_trials(spec)
        if all(t["n_heads"] == 2 for t in trials) or all(t["n_heads"] == 3 for t in trials):
            pytest.skip("draw did not mix valid and invalid head counts")
        result = random_sweep(spec, tiny_dataset, small_model_config, fast_train_config)
        invalid = result.table[result.table["n_heads"] == 3]
        assert set(invalid["status"]) == {"invalid"}
        assert invalid["val_auroc"].isna().all()
        assert trials[result.best_trial]["n_heads"] == 2

    def test_all_failed(self, tiny_dataset, small_model_config, fast_train_config):
        spec = SweepSpec(ranges={"n_heads": [3]}, n_trials=2, replications=1)
        with pytest.raises(SweepError):
            random_sweep(spec, tiny_dataset, small_model_config, fast_train_config)

    def test_threads_match_serial(self, tiny_dataset, small_model_config, fast_train_config):
        spec = SweepSpec(ranges={"learning_rate": [1e-3, 3e-3]}, n_trials=2, replications=1, seed=1)
        serial = random_sweep(spec, tiny_dataset, small_model_config, fast_train_config)
        threaded = random_sweep(spec, tiny_dataset, small_model_config, fast_train_config, workers=2)
        assert serial.table.equals(threaded.table)
