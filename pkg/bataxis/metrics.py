"""
Ranking metrics computed from raw scores.

auroc is the Mann-Whitney statistic (ties get half credit); auprc is
average precision, a step integral of precision over recall evaluated at
every distinct score threshold. Multiclass variants average one-vs-rest
values with equal class weights.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Iterable

import numpy as np
import pandas as pd

from .errors import DimensionError, MetricError


def _binary_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise DimensionError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    if not np.isfinite(scores).all():
        raise MetricError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def auroc(scores, labels) -> float:
    scores, labels = _binary_inputs(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"auroc needs both classes, got {n_pos} positives and {n_neg} negatives")
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    scores, labels = _binary_inputs(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("auprc needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    ranked_scores = scores[order]
    ranked_labels = labels[order]
    # last index of every block of tied scores
    cut = np.r_[np.flatnonzero(np.diff(ranked_scores)), ranked_labels.size - 1]
    true_pos = np.cumsum(ranked_labels)[cut]
    predicted = cut + 1
    precision = true_pos / predicted
    recall = true_pos / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _one_vs_rest(metric, probabilities, labels) -> float:
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if probabilities.ndim != 2 or probabilities.shape[0] != labels.size:
        raise DimensionError(
            f"probabilities must be (N, C) with N={labels.size}, got {probabilities.shape}"
        )
    return float(np.mean([
        metric(probabilities[:, c], (labels == c).astype(np.int64))
        for c in range(probabilities.shape[1])
    ]))


def macro_auroc(probabilities, labels) -> float:
    return _one_vs_rest(auroc, probabilities, labels)


def macro_auprc(probabilities, labels) -> float:
    return _one_vs_rest(auprc, probabilities, labels)


@dataclass(frozen=True)
class MetricsReport:
    auroc: float
    auprc: float
    n_samples: int = 0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def score_report(probabilities, labels) -> MetricsReport:
    """Binary metrics on the class-1 column when C == 2, macro one-vs-rest otherwise."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if probabilities.ndim == 1 or probabilities.shape[1] == 1:
        positive = probabilities.reshape(-1)
        return MetricsReport(auroc(positive, labels), auprc(positive, labels), labels.size)
    if probabilities.shape[1] == 2:
        return MetricsReport(auroc(probabilities[:, 1], labels), auprc(probabilities[:, 1], labels), labels.size)
    return MetricsReport(macro_auroc(probabilities, labels), macro_auprc(probabilities, labels), labels.size)


def summarize_replications(reports: Iterable[MetricsReport]) -> Dict[str, float]:
    """Mean and population standard deviation of each metric across replications."""
    reports = list(reports)
    if not reports:
        raise MetricError("no replications to summarize")
    frame = pd.DataFrame([{"auroc": r.auroc, "auprc": r.auprc} for r in reports])
    summary: Dict[str, float] = {"replications": len(reports)}
    for column in ("auroc", "auprc"):
        values = frame[column].to_numpy()
        summary[f"{column}_mean"] = float(np.mean(values))
        summary[f"{column}_std"] = float(np.std(values, ddof=0))
    return summary

