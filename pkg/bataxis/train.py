"""
Training and evaluation.

One epoch is a composed index sequence (balanced resampling for binary tasks,
a plain shuffle otherwise) cut into batches. After every epoch the model is
scored on the validation set and the parameters with the best validation
AUROC are kept; ``train`` restores them before returning.
"""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .data import Dataset, compose_epoch, iter_batches, shuffled_epoch
from .errors import ConfigError, DimensionError, MetricError, NumericError, TrainingError
from .logger import get_logger
from .metrics import MetricsReport, score_report
from .model import BiAxialTransformer, ModelConfig, build_model
from .tensor import DiffTensor, Parameter, as_tensor, record_op

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 20
    seed: int = 0
    eval_batch_size: int = 128
    dropout: Optional[float] = None
    attention_dropout: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError(f"batch sizes must be >= 1, got {self.batch_size}/{self.eval_batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")

    def apply_to(self, model_config: ModelConfig) -> ModelConfig:
        """Copy dropout rates set here into the model config."""
        changes = {k: getattr(self, k) for k in ("dropout", "attention_dropout")
                   if getattr(self, k) is not None}
        return replace(model_config, **changes) if changes else model_config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def cross_entropy(logits, labels) -> DiffTensor:
    """
    Mean negative log-likelihood of ``labels``.

    (N, C) logits use the softmax; (N, 1) logits use the logistic map for the
    probability of class 1. Probabilities are clamped to [1e-12, 1 - 1e-12];
    clamped entries pass no gradient.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise DimensionError(f"logits {logits.shape} do not match {labels.size} labels")
    n, c = logits.shape
    z = logits.data

    if c == 1:
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1 for single-logit outputs")
        p = 1.0 / (1.0 + np.exp(-z[:, 0]))
        clipped = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        y = labels.astype(np.float64)
        loss = -np.mean(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped))
        free = clipped == p

        def backward(g):
            return ((g * np.where(free, p - y, 0.0) / n)[:, None],)

        return record_op(np.asarray(loss), (logits,), backward, "cross_entropy")

    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in 0..{c - 1}")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    p_true = p[rows, labels]
    clipped = np.clip(p_true, PROB_FLOOR, 1.0 - PROB_FLOOR)
    loss = -np.mean(np.log(clipped))
    free = (clipped == p_true)[:, None]

    def backward(g):
        grad = p.copy()
        grad[rows, labels] -= 1.0
        return (g * np.where(free, grad, 0.0) / n,)

    return record_op(np.asarray(loss), (logits,), backward, "cross_entropy")


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamWConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamWState:
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamWState,
    config: AdamWConfig,
) -> Tuple[Dict[str, np.ndarray], AdamWState]:
    """
    One AdamW update. Decay shrinks each parameter by (1 - lr * decay) before
    the bias-corrected Adam step; a missing gradient counts as zero.
    """
    for name, grad in grads.items():
        if grad is not None and not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    step = state.step + 1
    first = dict(state.first_moment)
    second = dict(state.second_moment)
    lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step

    updated: Dict[str, np.ndarray] = {}
    for name, value in params.items():
        grad = grads.get(name)
        grad = np.zeros_like(value) if grad is None else np.asarray(grad, dtype=np.float64)
        m = b1 * first.get(name, np.zeros_like(value)) + (1.0 - b1) * grad
        v = b2 * second.get(name, np.zeros_like(value)) + (1.0 - b2) * grad * grad
        first[name], second[name] = m, v
        decayed = value * (1.0 - lr * config.weight_decay)
        updated[name] = decayed - lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps)
    return updated, AdamWState(step=step, first_moment=first, second_moment=second)


class AdamW:
    """Applies optimizer_step to a module's parameters in place."""

    def __init__(self, params: Mapping[str, Parameter], config: AdamWConfig):
        self.params = dict(params)
        self.config = config
        self.state = AdamWState()

    def step(self) -> None:
        values = {name: p.data for name, p in self.params.items()}
        grads = {name: p.grad for name, p in self.params.items()}
        updated, self.state = optimizer_step(values, grads, self.state, self.config)
        for name, p in self.params.items():
            p.data = updated[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: BiAxialTransformer, dataset: Dataset, batch_size: int = 128) -> np.ndarray:
    """(N, C) class probabilities in dataset order, dropout off."""
    was_training = model.training
    model.eval()
    try:
        chunks = [
            _softmax(model(batch).data)
            for batch in iter_batches(dataset, np.arange(len(dataset)), batch_size, model.registry)
        ]
    finally:
        model.train(was_training)
    return np.concatenate(chunks, axis=0)


def evaluate(model: BiAxialTransformer, dataset: Dataset, batch_size: int = 128) -> MetricsReport:
    """AUROC/AUPRC on ``dataset``; undefined metrics come back as NaN with a warning."""
    probabilities = predict_proba(model, dataset, batch_size)
    try:
        return score_report(probabilities, dataset.labels)
    except MetricError as exc:
        get_logger("bataxis.train").warning(f"metrics undefined on {dataset.name}: {exc}")
        return MetricsReport(math.nan, math.nan, len(dataset))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_auroc: float
    val_auprc: float


@dataclass
class TrainResult:
    parameters: Dict[str, np.ndarray]
    best_epoch: int
    validation: MetricsReport
    history: List[EpochRecord] = field(default_factory=list)


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _selection_score(report: MetricsReport) -> float:
    return -math.inf if math.isnan(report.auroc) else report.auroc


def train(
    model: BiAxialTransformer,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    logger=None,
) -> TrainResult:
    """
    Fit ``model`` and restore the parameters with the best validation AUROC.

    Epoch 0 denotes the initial parameters, which are what a zero-epoch run
    returns.
    """
    log = logger or get_logger("bataxis.train")
    rng = np.random.default_rng(config.seed)
    optimizer = AdamW(
        model.parameters(), AdamWConfig(config.learning_rate, config.weight_decay)
    )
    binary = train_set.n_classes == 2

    best_state = model.state_dict()
    best_epoch = 0
    best_report = evaluate(model, val_set, config.eval_batch_size) if config.max_epochs == 0 else None
    best_score = -math.inf
    history: List[EpochRecord] = []

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        seed = epoch_seed(config.seed, epoch)
        order = compose_epoch(train_set, seed) if binary else shuffled_epoch(train_set, seed)
        losses = []
        for step, batch in enumerate(iter_batches(train_set, order, config.batch_size, model.registry)):
            try:
                loss = cross_entropy(model(batch, rng), batch.labels)
                if not np.isfinite(loss.data).all():
                    raise TrainingError(f"loss became non-finite at batch {step}", epoch)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            except NumericError as exc:
                raise TrainingError(f"training diverged: {exc}", epoch) from exc
            losses.append(loss.item())
            log.debug(f"epoch {epoch} batch {step} loss={loss.item():.5f}")

        report = evaluate(model, val_set, config.eval_batch_size)
        mean_loss = float(np.mean(losses)) if losses else math.nan
        history.append(EpochRecord(epoch, mean_loss, report.auroc, report.auprc))
        log.info(
            f"epoch {epoch}/{config.max_epochs} loss={mean_loss:.4f} "
            f"val_auroc={report.auroc:.4f} val_auprc={report.auprc:.4f}"
        )
        score = _selection_score(report)
        if best_report is None or score > best_score:
            best_state, best_epoch, best_report, best_score = model.state_dict(), epoch, report, score

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(parameters=best_state, best_epoch=best_epoch, validation=best_report,
                       history=history)


def fit_model(
    model_config: ModelConfig,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    logger=None,
    registry_datasets=(),
) -> Tuple[BiAxialTransformer, TrainResult]:
    """
    Size the model to ``train_set`` (demographic width, class count), build it
    and train it. ``registry_datasets`` defaults to the training set.
    """
    model_config = replace(
        config.apply_to(model_config),
        n_demographics=train_set.n_demographics,
        n_classes=train_set.n_classes,
    )
    model = build_model(model_config, registry_datasets or (train_set,))
    return model, train(model, train_set, val_set, config, logger)
