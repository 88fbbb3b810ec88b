"""
Tests for ranking metrics.
"""

import numpy as np
import pytest

from bataxis.errors import DimensionError, MetricError
from bataxis.metrics import (
    MetricsReport,
    auprc,
    auroc,
    macro_auroc,
    score_report,
    summarize_replications,
)


class TestAuroc:
    """Mann-Whitney AUROC."""

    def test_perfect_and_reversed(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auroc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_ties_get_half_credit(self):
        assert auroc([0.5, 0.5], [0, 1]) == 0.5
        assert auroc([0.1, 0.4, 0.4, 0.8], [0, 0, 1, 1]) == pytest.approx(0.875)

    def test_single_class(self):
        with pytest.raises(MetricError, match="both classes"):
            auroc([0.1, 0.2], [1, 1])

    def test_bad_inputs(self):
        with pytest.raises(DimensionError):
            auroc([0.1, 0.2], [1])
        with pytest.raises(MetricError):
            auroc([0.1, np.nan], [0, 1])
        with pytest.raises(MetricError):
            auroc([0.1, 0.2], [0, 2])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_sklearn(self, seed):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        gen = np.random.default_rng(seed)
        labels = gen.integers(0, 2, 200)
        scores = np.round(gen.random(200) + 0.3 * labels, 2)
        assert auroc(scores, labels) == pytest.approx(sklearn_metrics.roc_auc_score(labels, scores))


class TestAuprc:
    """Average precision."""

    def test_hand_example(self):
        # precision at the two positives: 1/1 and 2/3
        assert auprc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) == pytest.approx(0.5 * 1.0 + 0.5 * 2 / 3)

    def test_all_tied_equals_prevalence(self):
        assert auprc([0.3] * 4, [1, 0, 0, 0]) == pytest.approx(0.25)

    def test_needs_a_positive(self):
        with pytest.raises(MetricError):
            auprc([0.1, 0.2], [0, 0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_sklearn(self, seed):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        gen = np.random.default_rng(seed)
        labels = gen.integers(0, 2, 150)
        scores = np.round(gen.random(150) + 0.2 * labels, 2)
        expected = sklearn_metrics.average_precision_score(labels, scores)
        assert auprc(scores, labels) == pytest.approx(expected)


def _pair_count_auroc(scores, labels):
    """Fraction of (positive, negative) pairs ranked correctly; ties count half."""
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return float(((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.size * neg.size))


def _threshold_sweep_ap(scores, labels):
    """Precision at every distinct threshold, weighted by the recall it adds."""
    total = labels.sum()
    ap, seen = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        chosen = scores >= threshold
        hits = labels[chosen].sum()
        ap += (hits / total - seen) * hits / chosen.sum()
        seen = hits / total
    return ap


def _random_instances(count=300, seed=17):
    gen = np.random.default_rng(seed)
    for _ in range(count):
        n = int(gen.integers(2, 201))
        labels = gen.integers(0, 2, n)
        labels[:2] = [0, 1]
        gen.shuffle(labels)
        # few distinct levels force ties
        levels = int(gen.integers(2, 30))
        shift = 0.1 * gen.random() if gen.random() < 0.5 else 0.0
        scores = gen.integers(0, levels, n) / levels + shift * labels
        yield scores, labels


class TestExhaustiveOracles:
    """auroc and auprc against direct enumeration."""

    def test_auroc_matches_pair_counting(self):
        for scores, labels in _random_instances():
            assert auroc(scores, labels) == pytest.approx(_pair_count_auroc(scores, labels), abs=1e-9)

    def test_auprc_matches_threshold_sweep(self):
        for scores, labels in _random_instances(seed=18):
            assert auprc(scores, labels) == pytest.approx(_threshold_sweep_ap(scores, labels), abs=1e-9)

    @pytest.mark.parametrize("prevalence", [0.05, 0.2, 0.5])
    def test_random_scores_give_prevalence(self, prevalence):
        gen = np.random.default_rng(int(prevalence * 100))
        labels = (gen.random(10_000) < prevalence).astype(int)
        scores = gen.random(10_000)
        assert auprc(scores, labels) == pytest.approx(labels.mean(), abs=0.05)
        assert auroc(scores, labels) == pytest.approx(0.5, abs=0.05)


class TestReports:
    """Binary and multiclass reports and replication summaries."""

    def test_binary_uses_class_one_column(self):
        probabilities = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
        report = score_report(probabilities, [0, 1, 0, 1])
        assert report == MetricsReport(1.0, 1.0, 4)

    def test_multiclass_is_macro_average(self):
        probabilities = np.eye(3)[[0, 1, 2, 0, 1, 2]] * 0.7 + 0.1
        report = score_report(probabilities, [0, 1, 2, 0, 1, 2])
        assert report.auroc == 1.0
        assert macro_auroc(probabilities, [0, 1, 2, 0, 1, 2]) == 1.0

    def test_multiclass_shape_checked(self):
        with pytest.raises(DimensionError):
            macro_auroc(np.ones((3, 3)), [0, 1])

    def test_summary_uses_population_std(self):
        summary = summarize_replications([MetricsReport(0.6, 0.5), MetricsReport(0.8, 0.7)])
        assert summary["replications"] == 2
        assert summary["auroc_mean"] == pytest.approx(0.7)
        assert summary["auroc_std"] == pytest.approx(0.1)
        assert summary["auprc_std"] == pytest.approx(0.1)

    def test_summary_needs_reports(self):
        with pytest.raises(MetricError):
            summarize_replications([])
