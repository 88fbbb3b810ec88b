"""
Random hyperparameter search.

Each range is either a list (uniform choice among its values) or a mapping
``{"low": a, "high": b, "log": bool}`` (uniform or log-uniform on [a, b];
integer keys are rounded). Every sampled trial is trained on every
replication split and the winner is the trial with the highest mean
validation AUROC.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Mapping, Tuple

import numpy as np
import pandas as pd

from .data import Dataset, SplitSpec, split
from .errors import ConfigError, SweepError, TrainingError
from .logger import get_logger
from .model import ModelConfig
from .train import TrainConfig, evaluate, fit_model

MODEL_KEYS = ("dropout", "attention_dropout", "n_heads", "n_layers", "pool", "embed_dim", "max_time")
TRAIN_KEYS = ("learning_rate", "weight_decay", "batch_size", "max_epochs")
INT_KEYS = ("n_heads", "n_layers", "embed_dim", "batch_size", "max_epochs")


def _check_range(key: str, value: Any) -> None:
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"range for {key!r} is empty")
        return
    if isinstance(value, Mapping):
        if set(value) - {"low", "high", "log"} or not {"low", "high"} <= set(value):
            raise ConfigError(f"range for {key!r} needs low/high (and optional log), got {dict(value)}")
        low, high = value["low"], value["high"]
        if not low <= high:
            raise ConfigError(f"range for {key!r} has low {low} > high {high}")
        if value.get("log") and low <= 0:
            raise ConfigError(f"log range for {key!r} needs low > 0")
        return
    raise ConfigError(f"range for {key!r} must be a list or a low/high mapping, got {value!r}")


@dataclass(frozen=True)
class SweepSpec:
    ranges: Mapping[str, Any] = field(default_factory=dict)
    n_trials: int = 20
    replications: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.ranges:
            raise ConfigError("sweep ranges must not be empty")
        unknown = set(self.ranges) - set(MODEL_KEYS) - set(TRAIN_KEYS)
        if unknown:
            raise ConfigError(f"cannot sweep {sorted(unknown)}; allowed: {sorted(MODEL_KEYS + TRAIN_KEYS)}")
        for key, value in self.ranges.items():
            _check_range(key, value)
        if self.n_trials < 1 or self.replications < 1:
            raise ConfigError("n_trials and replications must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {"ranges": {k: (list(v) if isinstance(v, list) else dict(v)) for k, v in self.ranges.items()},
                "n_trials": self.n_trials, "replications": self.replications, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SweepSpec":
        unknown = set(data) - {"ranges", "n_trials", "replications", "seed"}
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**data)


def _draw(rng: np.random.Generator, key: str, spec: Any):
    if isinstance(spec, list):
        value = spec[int(rng.integers(len(spec)))]
    else:
        low, high = float(spec["low"]), float(spec["high"])
        if spec.get("log"):
            value = float(np.exp(rng.uniform(np.log(low), np.log(high))))
        else:
            value = float(rng.uniform(low, high))
        if key in INT_KEYS:
            value = int(round(value))
    return value


def sample_trials(spec: SweepSpec) -> List[Dict[str, Any]]:
    rng = np.random.default_rng(spec.seed)
    return [{key: _draw(rng, key, spec.ranges[key]) for key in sorted(spec.ranges)}
            for _ in range(spec.n_trials)]


def apply_trial(params: Mapping[str, Any], model_config: ModelConfig,
                train_config: TrainConfig) -> Tuple[ModelConfig, TrainConfig]:
    model_changes = {k: v for k, v in params.items() if k in MODEL_KEYS}
    train_changes = {k: v for k, v in params.items() if k in TRAIN_KEYS}
    return replace(model_config, **model_changes), replace(train_config, **train_changes)


def map_jobs(fn: Callable, jobs: Iterable, workers: int = 1) -> List[Any]:
    """Run ``fn`` over ``jobs``, keeping input order; threads when workers > 1."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class SweepResult:
    best_trial: int
    best_params: Dict[str, Any]
    table: pd.DataFrame
    summary: pd.DataFrame


def random_sweep(
    spec: SweepSpec,
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    workers: int = 1,
    logger=None,
) -> SweepResult:
    log = logger or get_logger("bataxis.sweep")
    trials = sample_trials(spec)
    splits = [split(dataset, SplitSpec(seed=spec.seed, replication=r)) for r in range(spec.replications)]

    def run(job: Tuple[int, int]) -> Dict[str, Any]:
        trial, replication = job
        params = trials[trial]
        row: Dict[str, Any] = {"trial": trial, "replication": replication, **params}
        try:
            trial_model, trial_train = apply_trial(params, model_config, train_config)
            trial_model = replace(trial_model, seed=model_config.seed + replication)
            trial_train = replace(trial_train, seed=train_config.seed + replication)
            train_set, val_set, test_set = splits[replication]
            model, result = fit_model(trial_model, train_set, val_set, trial_train, log)
            test = evaluate(model, test_set, trial_train.eval_batch_size)
            row.update(status="ok", best_epoch=result.best_epoch,
                       val_auroc=result.validation.auroc, val_auprc=result.validation.auprc,
                       test_auroc=test.auroc, test_auprc=test.auprc)
        except (TrainingError, ConfigError) as exc:
            log.warning(f"trial {trial} replication {replication} failed: {exc}")
            row.update(status="diverged" if isinstance(exc, TrainingError) else "invalid",
                       best_epoch=-1, val_auroc=math.nan, val_auprc=math.nan,
                       test_auroc=math.nan, test_auprc=math.nan)
        log.info(f"trial {trial} replication {replication}: val_auroc={row['val_auroc']:.4f}")
        return row

    jobs = [(t, r) for t in range(spec.n_trials) for r in range(spec.replications)]
    table = pd.DataFrame(map_jobs(run, jobs, workers))

    ok = table[table["status"] == "ok"]
    if ok.empty:
        raise SweepError(f"all {spec.n_trials} trials failed")
    summary = (
        ok.groupby("trial")[["val_auroc", "val_auprc", "test_auroc", "test_auprc"]]
        .agg(lambda s: float(np.nanmean(s)) if s.notna().any() else math.nan)
        .reset_index()
    )
    ranked = summary.assign(_score=summary["val_auroc"].fillna(-math.inf))
    best_trial = int(ranked.sort_values(["_score", "trial"], ascending=[False, True]).iloc[0]["trial"])
    log.info(f"best trial {best_trial}: {trials[best_trial]}")
    return SweepResult(best_trial=best_trial, best_params=dict(trials[best_trial]),
                       table=table, summary=summary)
