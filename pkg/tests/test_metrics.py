"""Multilabel F1 against brute-force counting."""

import numpy as np
import pytest

from fusebench.metrics import (
    ConfusionCounts,
    confusion_counts,
    f1_sample,
    mean_f1,
    threshold_sets,
)

from _oracles import mean_f1_brute


def _random_sets(rng, n, num_classes, include_empty=True):
    out = []
    for _ in range(n):
        size = int(rng.integers(0 if include_empty else 1, num_classes + 1))
        out.append(set(rng.choice(num_classes, size=size, replace=False).tolist()))
    return out


class TestConfusionCounts:
    def test_basic_set_arithmetic(self):
        c = confusion_counts({0, 1, 2}, {0, 2, 5}, 18)
        assert (c.tp, c.fp, c.fn) == (2, 1, 1)

    def test_exact_match(self):
        c = confusion_counts({3, 4}, {3, 4}, 6)
        assert (c.fp, c.fn) == (0, 0)

    def test_empty_prediction(self):
        c = confusion_counts(set(), {1}, 4)
        assert (c.tp, c.fp, c.fn) == (0, 0, 1)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            confusion_counts({4}, {0}, 4)


class TestF1Sample:
    def test_two_thirds(self):
        assert f1_sample(ConfusionCounts(2, 1, 1)) == pytest.approx(2 / 3)

    def test_both_empty_scores_one(self):
        assert f1_sample(ConfusionCounts(0, 0, 0)) == 1.0

    def test_no_true_positives_scores_zero(self):
        assert f1_sample(ConfusionCounts(0, 3, 2)) == 0.0


class TestMeanF1:
    def test_perfect_predictions_all_modes(self):
        truths = [{0, 1}, {2}, set()]
        for mode in ("samples", "macro", "micro"):
            assert mean_f1(truths, truths, mode, num_classes=3) == 1.0

    def test_two_sample_average(self):
        preds = [{0, 1}, {0, 1, 2}]
        truths = [{0, 1}, {0, 2, 5}]
        assert mean_f1(preds, truths, "samples", 6) == pytest.approx((1.0 + 2 / 3) / 2)

    def test_against_brute_force_on_random_pairs(self):
        rng = np.random.default_rng(7)
        preds = _random_sets(rng, 1000, 10)
        truths = _random_sets(rng, 1000, 10)
        for mode in ("samples", "macro", "micro"):
            got = mean_f1(preds, truths, mode, num_classes=10)
            expected = mean_f1_brute(preds, truths, mode, 10)
            assert abs(got - expected) <= 1e-12

    def test_class_permutation_invariance(self):
        rng = np.random.default_rng(8)
        preds = _random_sets(rng, 200, 8)
        truths = _random_sets(rng, 200, 8)
        perm = rng.permutation(8)
        mapped_preds = [{int(perm[k]) for k in s} for s in preds]
        mapped_truths = [{int(perm[k]) for k in s} for s in truths]
        for mode in ("samples", "macro", "micro"):
            assert mean_f1(preds, truths, mode, 8) == pytest.approx(
                mean_f1(mapped_preds, mapped_truths, mode, 8), abs=1e-12
            )

    def test_micro_equals_samples_for_single_label_rows(self):
        rng = np.random.default_rng(9)
        preds = [{int(rng.integers(0, 5))} for _ in range(300)]
        truths = [{int(rng.integers(0, 5))} for _ in range(300)]
        assert mean_f1(preds, truths, "micro", 5) == pytest.approx(
            mean_f1(preds, truths, "samples", 5), abs=1e-12
        )

    def test_f1_one_iff_sets_equal(self):
        rng = np.random.default_rng(10)
        preds = _random_sets(rng, 300, 6)
        truths = _random_sets(rng, 300, 6)
        for p, t in zip(preds, truths):
            score = f1_sample(confusion_counts(p, t, 6))
            assert 0.0 <= score <= 1.0
            assert (score == 1.0) == (p == t)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mean_f1([{0}], [{0}, {1}])


class TestThresholdSets:
    def test_scalar_threshold(self):
        probs = np.array([[0.7, 0.2, 0.55]])
        assert threshold_sets(probs, 0.5) == [{0, 2}]

    def test_boundary_is_inclusive(self):
        probs = np.full((1, 4), 0.5)
        assert threshold_sets(probs, 0.5) == [{0, 1, 2, 3}]

    def test_per_class_vector(self):
        probs = np.array([[0.7, 0.2, 0.55]])
        assert threshold_sets(probs, [0.9, 0.1, 0.5]) == [{1, 2}]

    def test_scalar_equals_uniform_vector(self):
        rng = np.random.default_rng(11)
        probs = rng.random((50, 6))
        assert threshold_sets(probs, 0.5) == threshold_sets(probs, np.full(6, 0.5))

    def test_wrong_vector_length(self):
        with pytest.raises(ValueError):
            threshold_sets(np.zeros((1, 3)), [0.5, 0.5])
