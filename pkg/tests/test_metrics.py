import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowgnn.metrics import MetricReport, auroc, per_class_precision_recall, weighted_f1


def f1_oracle(y_true, y_pred):
    """Confusion-matrix walk per class, no vectorized shortcuts."""
    classes = sorted(set(y_true))
    total = 0.0
    for cls in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        support = sum(1 for t in y_true if t == cls)
        total += f1 * support / len(y_true)
    return total


def auroc_oracle(scores, labels):
    """All positive-negative pairs, ties worth one half."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestWeightedF1:
    def test_perfect(self):
        assert weighted_f1([0, 1, 2], [0, 1, 2]) == pytest.approx(1.0)

    def test_spec_example(self):
        assert weighted_f1([0, 0, 1], [0, 1, 1]) == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_all_one_class_on_balanced(self):
        y_true = [0] * 10 + [1] * 10
        y_pred = [0] * 20
        assert weighted_f1(y_true, y_pred) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_matches_oracle_random(self, rng):
        for _ in range(500):
            n = int(rng.integers(1, 21))
            c = int(rng.integers(1, 5))
            y_true = rng.integers(0, c, size=n).tolist()
            y_pred = rng.integers(0, c, size=n).tolist()
            assert weighted_f1(y_true, y_pred) == pytest.approx(
                f1_oracle(y_true, y_pred), abs=1e-12
            )

    @given(st.integers(1, 20), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_property_matches_oracle(self, n, c, seed):
        g = np.random.default_rng(seed)
        y_true = g.integers(0, c, size=n).tolist()
        y_pred = g.integers(0, c, size=n).tolist()
        assert weighted_f1(y_true, y_pred) == pytest.approx(
            f1_oracle(y_true, y_pred), abs=1e-12
        )

    def test_per_class_precision_recall(self):
        out = per_class_precision_recall([0, 0, 1], [0, 1, 1])
        assert out[0] == (1.0, 0.5)
        assert out[1] == (0.5, 1.0)


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == pytest.approx(1.0)

    def test_spec_example(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-15)

    def test_all_ties(self):
        assert auroc([0.5] * 8, [0, 1] * 4) == pytest.approx(0.5, abs=1e-15)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auroc([0.1, 0.2], [1, 1])

    def test_matches_oracle_random(self, rng):
        for _ in range(500):
            n = int(rng.integers(2, 21))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # coarse grid scores force plenty of exact ties
            scores = rng.integers(0, 5, size=n) / 4.0
            assert auroc(scores, labels) == pytest.approx(
                auroc_oracle(scores.tolist(), labels.tolist()), abs=1e-12
            )

    @given(st.integers(2, 20), st.integers(0, 2 ** 31 - 1), st.booleans())
    @settings(max_examples=100, deadline=None)
    def test_property_matches_oracle(self, n, seed, coarse):
        g = np.random.default_rng(seed)
        labels = g.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = (g.integers(0, 3, size=n) / 2.0) if coarse else g.normal(size=n)
        assert auroc(scores, labels) == pytest.approx(
            auroc_oracle(scores.tolist(), labels.tolist()), abs=1e-12
        )


class TestMetricReport:
    def test_single_run_std_zero(self):
        report = MetricReport("binary", "clf", "weighted_f1", [0.9])
        assert report.std == 0.0
        assert report.mean == pytest.approx(0.9)

    def test_to_dict_layout(self):
        report = MetricReport("binary", "clf", "weighted_f1", [0.5, 1.0])
        out = report.to_dict()
        assert set(out) == {"task", "model", "metric", "mean", "std", "per_seed"}
        assert out["mean"] == pytest.approx(0.75)
