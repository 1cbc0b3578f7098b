import numpy as np
import pytest

from arcfault.metrics import (
    Metrics,
    UndefinedMetric,
    auc,
    compute_metrics,
    confusion,
    macro_f1_score,
)
from arcfault.rng import make_rng

from oracles import pairwise_roc_auc, recount_confusion


class TestConfusionAndScores:
    def test_perfect_predictor_all_ones(self):
        y = np.array([0, 1, 1, 0, 1])
        m = compute_metrics(y, y.astype(float))
        assert m == Metrics(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    def test_constant_half_on_balanced(self):
        y = np.array([0, 1] * 50)
        m = compute_metrics(y, np.full(100, 0.5))
        assert m.accuracy == 0.5
        assert m.roc_auc == 0.5

    def test_matches_brute_force_recount(self):
        rng = make_rng(1)
        y = rng.integers(0, 2, 1000)
        scores = rng.random(1000)
        preds = scores > 0.5
        assert confusion(y, preds) == recount_confusion(y, preds)
        m = compute_metrics(y, scores)
        tp, fp, tn, fn = recount_confusion(y, preds)
        assert m.accuracy == pytest.approx((tp + tn) / 1000)
        assert m.precision == pytest.approx(tp / (tp + fp))
        assert m.recall == pytest.approx(tp / (tp + fn))

    def test_f1_harmonic_identity(self):
        rng = make_rng(2)
        y = rng.integers(0, 2, 500)
        m = compute_metrics(y, rng.random(500))
        if m.precision + m.recall > 0:
            expected = 2 * m.precision * m.recall / (m.precision + m.recall)
            assert m.f1 == pytest.approx(expected)

    def test_macro_f1_is_class_mean(self):
        y = np.array([0, 0, 1, 1])
        preds = np.array([0, 1, 1, 1])
        # class 1: p=2/3, r=1, f1=0.8; class 0: p=1, r=0.5, f1=2/3
        assert macro_f1_score(y, preds) == pytest.approx(0.5 * (0.8 + 2 / 3))


class TestAuc:
    def test_perfect_ranking(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        labels = np.array([0, 0, 1, 1])
        assert auc(scores, labels, "roc") == 1.0
        assert auc(scores, labels, "pr") == 1.0

    def test_reversed_ranking(self):
        scores = np.array([0.9, 0.8, 0.2, 0.1])
        labels = np.array([0, 0, 1, 1])
        assert auc(scores, labels, "roc") == 0.0

    def test_matches_pairwise_oracle(self):
        rng = make_rng(3)
        scores = np.round(rng.random(200), 2)  # rounding forces ties
        labels = rng.integers(0, 2, 200)
        fast = auc(scores, labels, "roc")
        slow = pairwise_roc_auc(scores, labels)
        assert fast == pytest.approx(slow, abs=1e-9)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetric):
            auc(np.array([0.1, 0.9]), np.array([1, 1]), "roc")

    def test_bounds_property(self):
        rng = make_rng(4)
        for _ in range(25):
            n = int(rng.integers(5, 60))
            scores = rng.random(n)
            labels = np.concatenate([[0, 1], rng.integers(0, 2, n - 2)])
            for kind in ("roc", "pr"):
                value = auc(scores, labels, kind)
                assert 0.0 <= value <= 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            auc(np.array([0.1, 0.9]), np.array([0, 1]), "f1")
