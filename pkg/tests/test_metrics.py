import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protodx.errors import DegenerateLabelError, InputError
from protodx.metrics import (
    bucketed_macro,
    evaluate_scores,
    micro_roc_auc,
    pr_auc,
    roc_auc,
)


def brute_force_roc_auc(scores, labels):
    """O(n^2) pairwise counting oracle."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def rank_walk_average_precision(scores, labels):
    """Stable descending rank walk oracle."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / rank
    return total / sum(labels)


class TestRocAuc:
    def test_perfect_ranking(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_reversed_labels(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_three_of_four_pairs_concordant(self):
        # pairs: (.35,.1)+, (.35,.4)-, (.8,.1)+, (.8,.4)+  => 3/4
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateLabelError):
            roc_auc([0.1, 0.2], [1, 1])
        with pytest.raises(DegenerateLabelError):
            roc_auc([0.1, 0.2], [0, 0])

    def test_ties_count_half(self):
        assert roc_auc([0.5, 0.5], [1, 0]) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            roc_auc([0.1, 0.2], [1])

    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_matches_brute_force(self, data):
        n = data.draw(st.integers(2, 12))
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(
                lambda ys: 0 < sum(ys) < len(ys)
            )
        )
        scores = data.draw(
            st.lists(
                st.floats(-5, 5, allow_nan=False).map(lambda x: round(x, 1)),
                min_size=n,
                max_size=n,
            )
        )
        assert roc_auc(scores, labels) == pytest.approx(
            brute_force_roc_auc(scores, labels), abs=1e-12
        )

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_invariant_under_monotone_transform(self, data):
        n = data.draw(st.integers(2, 20))
        labels = data.draw(
            st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(
                lambda ys: 0 < sum(ys) < len(ys)
            )
        )
        # coarse grid keeps the transform from collapsing distinct scores
        # through float absorption, which would create new ties
        scores = np.array(
            data.draw(
                st.lists(
                    st.floats(-3, 3, allow_nan=False).map(lambda x: round(x, 3)),
                    min_size=n,
                    max_size=n,
                )
            )
        )
        a = data.draw(st.floats(0.1, 10).map(lambda x: round(x, 3)))
        b = data.draw(st.floats(-5, 5).map(lambda x: round(x, 3)))
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(a * scores + b, labels), abs=1e-12
        )

    def test_complement_symmetry_tie_free(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(3, 15))
            scores = rng.permutation(n).astype(float)  # distinct scores
            labels = np.zeros(n, dtype=int)
            labels[rng.choice(n, size=rng.integers(1, n), replace=False)] = 1
            if labels.sum() in (0, n):
                continue
            assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(
                1.0, abs=1e-12
            )


class TestPrAuc:
    def test_all_positives_first(self):
        assert pr_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_single_positive_last(self):
        n = 5
        scores = [0.9, 0.8, 0.7, 0.6, 0.1]
        labels = [0, 0, 0, 0, 1]
        assert pr_auc(scores, labels) == pytest.approx(1.0 / n)

    def test_hand_computed(self):
        # ranked: 0.9 (pos, p=1/1), 0.6 (neg), 0.4 (pos, p=2/3)
        assert pr_auc([0.9, 0.6, 0.4], [1, 0, 1]) == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)

    def test_no_positives_degenerate(self):
        with pytest.raises(DegenerateLabelError):
            pr_auc([0.3, 0.2], [0, 0])

    def test_tie_broken_by_original_order(self):
        # equal scores: stable sort keeps the earlier element first
        assert pr_auc([0.5, 0.5], [1, 0]) == 1.0
        assert pr_auc([0.5, 0.5], [0, 1]) == 0.5

    def test_matches_rank_walk_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(2, 13))
            labels = (rng.random(n) < 0.5).astype(int)
            if labels.sum() == 0:
                labels[0] = 1
            scores = np.round(rng.random(n), 1)
            assert pr_auc(scores, labels) == pytest.approx(
                rank_walk_average_precision(scores.tolist(), labels.tolist()), abs=1e-12
            )


class TestMicroRocAuc:
    def test_single_label_reduces_to_per_label(self):
        scores = np.array([[0.9], [0.2], [0.6]])
        labels = np.array([[1], [0], [1]])
        assert micro_roc_auc(scores, labels) == roc_auc(scores[:, 0], labels[:, 0])

    def test_perfect_matrix(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([[1, 0], [0, 1]])
        assert micro_roc_auc(scores, labels) == 1.0

    def test_hand_computed_2x2(self):
        scores = np.array([[0.9, 0.2], [0.3, 0.8]])
        labels = np.array([[1, 0], [0, 1]])
        assert micro_roc_auc(scores, labels) == 1.0

    def test_degenerate_flat(self):
        with pytest.raises(DegenerateLabelError):
            micro_roc_auc(np.ones((2, 2)), np.ones((2, 2)))


class TestBuckets:
    def test_boundaries(self):
        aucs = [0.5, 0.6, 0.7, 0.8, 0.9]
        freqs = [1, 10, 51, 100, 101]
        buckets = bucketed_macro(aucs, freqs)
        assert buckets["[1,10)"] == 0.5
        assert buckets["[10,51)"] == pytest.approx(0.6)
        assert buckets["[51,101)"] == pytest.approx((0.7 + 0.8) / 2)
        assert buckets["[101,inf)"] == pytest.approx(0.9)

    def test_empty_bucket_absent(self):
        buckets = bucketed_macro([0.7], [500])
        assert list(buckets) == ["[101,inf)"]

    def test_zero_frequency_label_in_no_bucket(self):
        buckets = bucketed_macro([0.7, 0.9], [0, 5])
        assert buckets == {"[1,10)": 0.9}

    def test_all_in_one_bucket_equals_macro(self):
        aucs = [0.6, 0.8, None]
        buckets = bucketed_macro(aucs, [3, 4, 5])
        assert buckets["[1,10)"] == pytest.approx(0.7)


class TestEvaluateScores:
    def test_macro_is_mean_of_included(self):
        rng = np.random.default_rng(2)
        scores = rng.random((30, 4))
        labels = (rng.random((30, 4)) < 0.3).astype(int)
        labels[:, 3] = 0  # degenerate column
        labels[0, 0] = 1
        labels[1, 0] = 0
        report = evaluate_scores(scores, labels, ["a", "b", "c", "d"])
        included = [v["roc_auc"] for v in report.per_label.values() if v["roc_auc"] is not None]
        assert report.roc_auc_macro == pytest.approx(np.mean(included), abs=1e-12)
        assert report.excluded_degenerate == 1
        assert report.per_label["d"]["roc_auc"] is None

    def test_json_fields(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        labels = np.array([[1, 0], [0, 1]])
        report = evaluate_scores(scores, labels, ["x", "y"], label_train_freq=[5, 200])
        payload = report.to_json()
        assert set(payload) == {
            "roc_auc_macro",
            "roc_auc_micro",
            "pr_auc_macro",
            "per_label",
            "buckets",
            "excluded_degenerate",
        }
        assert payload["buckets"] == {"[1,10)": 1.0, "[101,inf)": 1.0}
