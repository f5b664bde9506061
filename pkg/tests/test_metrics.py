"""Ranking and error metrics against hand-enumerated oracles."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfglm import metrics

# grid-valued scores: keeps nonlinear monotone transforms injective in
# floating point (a 1e-84 score would otherwise collapse into a tie)
finite_scores = st.lists(
    st.integers(-100_000, 100_000).map(lambda v: v / 1000.0),
    min_size=2,
    max_size=50,
)


class TestAuc:
    def test_perfect_ranking(self):
        assert metrics.auc([0.9, 0.1], [1, -1]) == 1.0

    def test_all_ties(self):
        assert metrics.auc([0.5, 0.5, 0.5, 0.5], [1, -1, 1, -1]) == 0.5

    def test_enumerated_pairs(self):
        # pos {0.8, 0.4} vs neg {0.6}: one concordant, one discordant
        assert metrics.auc([0.8, 0.6, 0.4], [1, -1, 1]) == 0.5

    def test_tie_gets_half_credit(self):
        # pairs: (0.7, 0.7) tie -> 0.5 of 1 pair
        assert metrics.auc([0.7, 0.7], [1, -1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            metrics.auc([0.1, 0.2], [1, 1])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            metrics.auc([0.1, 0.2], [1, -1, 1])

    @given(scores=finite_scores, data=st.data())
    def test_monotone_transform_invariance(self, scores, data):
        n = len(scores)
        labels = data.draw(
            st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n)
        )
        if len(set(labels)) < 2:
            return
        base = metrics.auc(scores, labels)
        squeezed = np.tanh(np.asarray(scores) / 50.0) * 3.0 + 7.0
        assert metrics.auc(squeezed, labels) == pytest.approx(base, abs=1e-12)

    def test_complement_symmetry(self):
        scores = [0.9, 0.8, 0.35, 0.2, 0.1]
        labels = [1, -1, 1, -1, 1]
        a = metrics.auc(scores, labels)
        flipped = metrics.auc([-s for s in scores], labels)
        assert a + flipped == pytest.approx(1.0)


class TestKs:
    def test_perfect_separation(self):
        assert metrics.ks([0.9, 0.7, 0.3, 0.1], [1, 1, -1, -1]) == 1.0

    def test_identical_distributions(self):
        assert metrics.ks([0.5, 0.5], [1, -1]) == 0.0

    def test_partial_overlap(self):
        # threshold above 0.4 keeps TPR 1.0 and FPR 0.5
        got = metrics.ks([0.9, 0.5, 0.6, 0.1], [1, 1, -1, -1])
        assert got == pytest.approx(0.5)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            metrics.ks([0.1, 0.2], [-1, -1])

    @given(scores=finite_scores, data=st.data())
    def test_bounded(self, scores, data):
        n = len(scores)
        labels = data.draw(
            st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n)
        )
        if len(set(labels)) < 2:
            return
        got = metrics.ks(scores, labels)
        assert 0.0 <= got <= 1.0


class TestErrors:
    def test_exact_predictions(self):
        y = np.array([1.0, 2.0, 3.0])
        assert metrics.mae(y, y) == 0.0
        assert metrics.rmse(y, y) == 0.0

    def test_unit_residuals(self):
        assert metrics.mae([1.0, -1.0], [0.0, 0.0]) == 1.0
        assert metrics.rmse([1.0, -1.0], [0.0, 0.0]) == 1.0

    def test_hand_arithmetic(self):
        pred = np.array([3.0, 0.0, 0.0, 0.0])
        y = np.zeros(4)
        assert metrics.mae(pred, y) == 0.75
        assert metrics.rmse(pred, y) == 1.5

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            metrics.mae([1.0], [1.0, 2.0])

    @given(
        residuals=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50)
    )
    def test_rmse_dominates_mae(self, residuals):
        pred = np.asarray(residuals)
        y = np.zeros(len(residuals))
        assert metrics.rmse(pred, y) >= metrics.mae(pred, y) - 1e-9


class TestLossCurve:
    def test_header_and_rows(self, tmp_path):
        out = tmp_path / "curve.csv"
        text = metrics.export_loss_curve([0.7, 0.6, 0.55], out)
        lines = text.strip().split("\n")
        assert lines[0] == "iteration,loss"
        assert len(lines) == 4
        assert lines[1] == "1,0.7"
        assert out.read_text() == text

    def test_empty_run(self):
        assert metrics.export_loss_curve([]) == "iteration,loss\n"
