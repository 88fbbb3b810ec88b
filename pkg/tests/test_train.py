"""
Tests for the loss, the optimizer and the training loop.
"""

from dataclasses import replace

import numpy as np
import pytest

from bataxis.errors import ConfigError, NumericError, TrainingError
from bataxis.model import build_model
from bataxis.tensor import Parameter, grad_check
from bataxis.train import (
    AdamWConfig,
    AdamWState,
    TrainConfig,
    cross_entropy,
    epoch_seed,
    evaluate,
    fit_model,
    optimizer_step,
    predict_proba,
    train,
)


class TestCrossEntropy:
    """Softmax and logistic negative log-likelihood."""

    def test_uniform_logits(self):
        loss = cross_entropy(np.zeros((4, 3)), [0, 1, 2, 0])
        assert loss.item() == pytest.approx(np.log(3.0))

    def test_single_logit_matches_two_class(self):
        z = np.array([[0.3], [-1.2], [2.0]])
        labels = [1, 0, 1]
        two = np.concatenate([np.zeros_like(z), z], axis=1)
        assert cross_entropy(z, labels).item() == pytest.approx(cross_entropy(two, labels).item())

    @pytest.mark.parametrize("classes", [1, 2, 4])
    def test_gradient(self, classes, rng):
        logits = Parameter(rng.standard_normal((5, classes)), "logits")
        labels = rng.integers(0, max(classes, 2), 5)
        report = grad_check(lambda z: cross_entropy(z, labels), [logits])
        assert report.passed, report.errors

    def test_clamped_probability_is_finite(self):
        logits = Parameter([[1000.0, -1000.0]], "logits")
        loss = cross_entropy(logits, [1])
        assert loss.item() == pytest.approx(-np.log(1e-12))
        loss.backward()
        assert np.all(logits.grad == 0.0)

    def test_label_range(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((2, 2)), [0, 2])


class TestAdamW:
    """Single optimizer steps."""

    def test_first_step_moves_by_learning_rate(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([0.5, -3.0])}
        updated, state = optimizer_step(params, grads, AdamWState(), AdamWConfig(0.1, 0.0))
        assert np.allclose(updated["w"], [0.9, -1.9], atol=1e-6)
        assert state.step == 1

    def test_decay_is_decoupled(self):
        params = {"w": np.array([2.0])}
        updated, _ = optimizer_step(params, {"w": None}, AdamWState(), AdamWConfig(0.1, 0.5))
        assert updated["w"][0] == pytest.approx(2.0 * (1 - 0.05))

    def test_inputs_not_mutated(self):
        params = {"w": np.array([1.0])}
        optimizer_step(params, {"w": np.array([1.0])}, AdamWState(), AdamWConfig())
        assert params["w"][0] == 1.0

    def test_non_finite_gradient(self):
        with pytest.raises(NumericError):
            optimizer_step({"w": np.ones(1)}, {"w": np.array([np.inf])}, AdamWState(), AdamWConfig())


class TestTrainConfig:
    """Validation and dropout overrides."""

    @pytest.mark.parametrize("overrides", [
        {"learning_rate": 0.0}, {"weight_decay": -1.0}, {"batch_size": 0}, {"max_epochs": -1},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            TrainConfig(**overrides)

    def test_apply_to_overrides_dropout(self, small_model_config):
        cfg = TrainConfig(dropout=0.3).apply_to(small_model_config)
        assert cfg.dropout == 0.3
        assert cfg.attention_dropout == small_model_config.attention_dropout

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"epochs": 3})

    def test_epoch_seed_is_stable(self):
        assert epoch_seed(3, 1) == epoch_seed(3, 1)
        assert epoch_seed(3, 1) != epoch_seed(3, 2)


class TestTraining:
    """The epoch loop, model selection and evaluation."""

    def test_zero_epochs_returns_initial_parameters(self, tiny_splits, small_model_config):
        train_set, val_set, _ = tiny_splits
        model = build_model(small_model_config, [train_set])
        initial = model.state_dict()
        result = train(model, train_set, val_set, TrainConfig(max_epochs=0))
        assert result.best_epoch == 0
        assert result.history == []
        for name, value in initial.items():
            assert np.array_equal(model.parameters()[name].data, value)

    def test_history_and_best_epoch(self, tiny_splits, small_model_config, fast_train_config):
        train_set, val_set, _ = tiny_splits
        model, result = fit_model(small_model_config, train_set, val_set,
                                  replace(fast_train_config, max_epochs=3))
        assert [rec.epoch for rec in result.history] == [1, 2, 3]
        assert 1 <= result.best_epoch <= 3
        best = result.history[result.best_epoch - 1]
        assert best.val_auroc == pytest.approx(result.validation.auroc, nan_ok=True)
        assert not model.training
        for name, value in result.parameters.items():
            assert np.array_equal(model.parameters()[name].data, value)

    def test_same_seed_same_result(self, tiny_splits, small_model_config, fast_train_config):
        train_set, val_set, test_set = tiny_splits
        outputs = []
        for _ in range(2):
            model, _ = fit_model(small_model_config, train_set, val_set, fast_train_config)
            outputs.append(predict_proba(model, test_set))
        assert np.array_equal(outputs[0], outputs[1])

    def test_fit_sizes_model_to_data(self, tiny_splits, small_model_config, fast_train_config):
        train_set, val_set, _ = tiny_splits
        model, _ = fit_model(replace(small_model_config, n_demographics=0), train_set, val_set,
                             replace(fast_train_config, dropout=0.25))
        assert model.config.n_demographics == 2
        assert model.config.dropout == 0.25

    def test_probabilities_sum_to_one(self, tiny_splits, small_model_config):
        train_set, _, test_set = tiny_splits
        model = build_model(small_model_config, [train_set])
        probabilities = predict_proba(model, test_set, batch_size=3)
        assert probabilities.shape == (len(test_set), 2)
        assert np.allclose(probabilities.sum(axis=1), 1.0)
        assert model.training

    def test_single_class_evaluation_is_nan(self, tiny_splits, small_model_config):
        train_set, _, _ = tiny_splits
        model = build_model(small_model_config, [train_set])
        negatives = train_set.subset(np.flatnonzero(train_set.labels == 0))
        report = evaluate(model, negatives)
        assert np.isnan(report.auroc)

    def test_divergence_is_reported(self, tiny_splits, small_model_config):
        train_set, val_set, _ = tiny_splits
        model = build_model(small_model_config, [train_set])
        model.parameters()["head.out.weight"].data[:] = np.nan
        with pytest.raises(TrainingError) as info:
            train(model, train_set, val_set, TrainConfig(max_epochs=2))
        assert info.value.epoch == 1
