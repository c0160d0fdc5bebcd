import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipl.estimators import LinearRegression, LogisticRegression, roc_auc
from ipl.interpret import (
    ImportanceReport,
    feature_overlap_ratio,
    interpretability_metrics,
    perturbation_analysis,
    rank_features,
    ranking_similarity,
    sparsity_accuracy_sweep,
    term_key,
    term_name,
    top_feature,
    value_similarity,
)
from ipl.pipeline import fit_ipl
from ipl.polycore import CenterSet, KernelModel
from ipl.timeseries import LagSpec, RawSeries, lag_embed, simulate_alarm, simulate_benchmark


@pytest.fixture(scope="module")
def noiseless_fit():
    tr, _, truth = simulate_benchmark(1000, 50, seed=0, include_temporal=False, noise_sd=0.0)
    # unscaled so coefficients live in the raw coordinates of the truth
    return fit_ipl(lag_embed(tr), scale=False), truth


class TestNames:
    def test_interaction(self):
        assert term_name((0, 1, 1), ("x1[t]", "x2[t]", "x3[t]")) == "x2[t]*x3[t]"

    def test_power(self):
        assert term_name((0, 2), ("x1[t]", "y[t-1]")) == "y[t-1]^2"

    def test_constant(self):
        assert term_name((0, 0), ("a", "b")) == "1"

    def test_key_ignores_current_time_marker(self):
        assert term_key((1, 1), ("x1[t]", "x2[t]")) == term_key((1, 1), ("x1", "x2"))


class TestRankFeatures:
    def test_noiseless_recovery_order(self, noiseless_fit):
        fitted, truth = noiseless_fit
        rep = rank_features(fitted)
        names = [e.name for e in rep.top(7)]
        assert names == ["x3[t]*x4[t]", "x1[t]*x2[t]", "x5[t]", "x4[t]", "x3[t]", "x2[t]", "x1[t]"]
        assert rep.entries[0].coefficient == pytest.approx(-7 / 15, abs=1e-8)
        assert all(abs(e.coefficient) < 1e-8 for e in rep.entries[7:])

    def test_infinite_threshold(self, noiseless_fit):
        rep = rank_features(noiseless_fit[0], math.inf)
        assert len(rep) == 0

    def test_zero_model(self):
        m = KernelModel(2, CenterSet(np.random.default_rng(0).random((6, 2))), np.zeros(6), ("a", "b"))
        assert len(rank_features(m)) == 0 or all(e.coefficient == 0 for e in rank_features(m).entries)
        assert len(rank_features(m, threshold=1e-300)) == 0

    def test_constant_kept_when_requested(self, noiseless_fit):
        rep = rank_features(noiseless_fit[0], 0.05, exclude_constant=False)
        assert any(e.name == "1" for e in rep.entries)

    def test_sorted_and_ranked(self, noiseless_fit):
        rep = rank_features(noiseless_fit[0])
        mags = [abs(e.coefficient) for e in rep.entries]
        assert mags == sorted(mags, reverse=True)
        assert [e.rank for e in rep.entries] == list(range(1, len(rep) + 1))

    def test_table_round_trip(self, noiseless_fit):
        rep = rank_features(noiseless_fit[0], 0.01)
        back = ImportanceReport.from_rows(rep.to_rows(), rep.feature_names, rep.degree, rep.threshold)
        assert [(e.name, e.index, e.coefficient) for e in back.entries] == \
            [(e.name, e.index, e.coefficient) for e in rep.entries]

    def test_top_feature(self, noiseless_fit):
        # top term x3*x4; x4 has larger aggregate importance than x3
        assert top_feature(rank_features(noiseless_fit[0])) == 3


class TestOverlap:
    def test_half(self):
        assert feature_overlap_ratio(["a", "b"], ["a", "c"]) == 0.5

    def test_subset(self):
        assert feature_overlap_ratio(["a", "b"], ["c", "b", "a"]) == 1.0

    def test_empty_truth(self):
        with pytest.raises(ValueError):
            feature_overlap_ratio([], ["a"])

    @settings(max_examples=50, deadline=None)
    @given(truth=st.sets(st.integers(0, 20), min_size=1), top=st.lists(st.integers(0, 20), unique=True))
    def test_range(self, truth, top):
        r = feature_overlap_ratio(sorted(truth), top, top_k=10)
        assert 0.0 <= r <= 1.0


class TestRanking:
    def test_identical(self):
        for n in (2, 5, 9):
            assert ranking_similarity(list(range(n)), list(range(n))) == 1.0

    def test_reversed_three(self):
        assert ranking_similarity(["c", "b", "a"], ["a", "b", "c"]) == pytest.approx(-1.0)

    def test_single_term_undefined(self):
        assert math.isnan(ranking_similarity(["a"], ["a"]))

    def test_interleaved_extra_terms_ignored(self):
        assert ranking_similarity(["a", "z", "b", "y", "c"], ["a", "b", "c"]) == 1.0

    def test_hand_computed(self):
        # method ranks (2, 1, 3, 4) against truth (1, 2, 3, 4): sum d^2 = 2
        assert ranking_similarity(["b", "a", "c", "d"], ["a", "b", "c", "d"]) == pytest.approx(1 - 12 / 60)

    def test_missing_terms_rank_last(self):
        # a listed first, b and c absent share rank 2: d^2 = 0 + 0 + 1
        assert ranking_similarity(["a"], ["a", "b", "c"]) == pytest.approx(1 - 6 / 24)

    @settings(max_examples=100, deadline=None)
    @given(perm=st.permutations(list(range(8))), drop=st.integers(0, 8))
    def test_range(self, perm, drop):
        r = ranking_similarity(perm[drop:], list(range(8)))
        assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12


class TestValueSimilarity:
    def test_parallel(self):
        assert value_similarity([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert value_similarity([1, 0], [0, 1]) == 0.0

    def test_zero_method_flagged(self):
        with pytest.warns(RuntimeWarning):
            assert value_similarity([0, 0], [1, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            value_similarity([1, 2], [1])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
           st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
    def test_range(self, a, b):
        if np.linalg.norm(b) == 0:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert -1.0 <= value_similarity(a, b) <= 1.0


class TestInterpretabilityMetrics:
    def test_noiseless_perfect(self, noiseless_fit):
        fitted, truth = noiseless_fit
        m = interpretability_metrics(rank_features(fitted), truth)
        assert m.feature_overlap_ratio == 1.0
        assert m.ranking_similarity == 1.0
        assert m.value_similarity == pytest.approx(1.0, abs=1e-10)
        assert m.flags == ()

    def test_scaled_fit_close(self):
        tr, _, truth = simulate_benchmark(1000, 50, seed=0, include_temporal=False, noise_sd=0.0)
        m = interpretability_metrics(rank_features(fit_ipl(lag_embed(tr))), truth)
        assert m.ranking_similarity == 1.0 and m.value_similarity >= 0.999


@pytest.fixture(scope="module")
def augmented():
    tr, te, _ = simulate_benchmark(800, 300, seed=4, add_irrelevant=True)
    return lag_embed(tr, LagSpec(0, 2)), lag_embed(te, LagSpec(0, 2))


class TestPerturbation:

    def test_zero_alpha(self, augmented):
        rows = perturbation_analysis(*augmented, ["x1[t]", "x6[t]"], [0.0], trials=3)
        assert all(r.mean_degradation == 0.0 for r in rows)

    def test_relevant_beats_irrelevant(self, augmented):
        rows = perturbation_analysis(*augmented, ["x5[t]", "x6[t]"], [1.0], trials=10, seed=1)
        by = {r.feature: r for r in rows}
        assert by["x5[t]"].mean_degradation > 10 * abs(by["x6[t]"].mean_degradation)

    def test_threads_identical(self, augmented):
        a = perturbation_analysis(*augmented, [0, 5], [0.5], trials=4, seed=2, threads=1)
        b = perturbation_analysis(*augmented, [0, 5], [0.5], trials=4, seed=2, threads=4)
        assert [r.trials for r in a] == [r.trials for r in b]

    def test_singular_design(self):
        X = np.random.default_rng(0).random((50, 2))
        X = np.hstack([X, X[:, :1]])
        y = X[:, 0] + 0.1 * np.random.default_rng(1).standard_normal(50)
        ds = lag_embed(RawSeries(X, y, ("a", "b", "c")))
        rows = perturbation_analysis(ds, ds, ["a[t]"], [0.5], trials=2)
        assert np.isfinite(rows[0].mean_degradation)


class TestSweep:
    def test_separable_toy_auc(self):
        rng = np.random.default_rng(0)
        X = rng.random((300, 2))
        y = np.where(X[:, 0] > 0.5, 1.0, -1.0)
        ds = lag_embed(RawSeries(X, y, ("a", "b")))
        fitted = fit_ipl(ds, degree=1, loss="hinge")
        res = sparsity_accuracy_sweep(fitted, ds, ds, [2], "auc")
        assert res.scores[0] == pytest.approx(1.0)

    def test_clamps_with_warning(self):
        rng = np.random.default_rng(1)
        X = rng.random((100, 2))
        ds = lag_embed(RawSeries(X, np.where(X.sum(1) > 1, 1.0, -1.0), ("a", "b")))
        fitted = fit_ipl(ds, degree=1, loss="hinge")
        with pytest.warns(RuntimeWarning, match="clamped"):
            res = sparsity_accuracy_sweep(fitted, ds, ds, [1, 50], "accuracy")
        assert res.k_values == (1, 2)

    def test_alarm_curve_plateaus(self):
        s = simulate_alarm(1500, seed=5)
        ds = lag_embed(s)
        tr, te = ds.rows(0, 1000), ds.rows(1000, 1500)
        fitted = fit_ipl(tr, degree=2, loss="hinge")
        res = sparsity_accuracy_sweep(fitted, tr, te, [1, 3, 6, 10], "auc")
        assert res.scores[0] >= 0.95
        assert min(res.scores) >= 0.95

    def test_rejects_regression_targets(self):
        ds = lag_embed(RawSeries(np.random.default_rng(0).random((30, 2)), np.linspace(0, 1, 30), ("a", "b")))
        fitted = fit_ipl(ds, degree=1)
        with pytest.raises(ValueError):
            sparsity_accuracy_sweep(fitted, ds, ds, [1])


class TestEstimators:
    def test_linear_regression_exact(self):
        X = np.random.default_rng(0).random((20, 2))
        y = 1.5 + X @ [2.0, -3.0]
        np.testing.assert_allclose(LinearRegression().fit(X, y).coef_, [1.5, 2.0, -3.0])

    def test_logistic_matches_gradient_zero(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((200, 2))
        y = np.where(X[:, 0] + 0.8 * rng.standard_normal(200) > 0, 1, -1)
        clf = LogisticRegression().fit(X, y)
        Z = np.hstack([np.ones((200, 1)), X])
        p = 1 / (1 + np.exp(-Z @ clf.coef_))
        assert np.max(np.abs(Z.T @ (p - (y > 0)))) <= 1e-6

    def test_auc_hand(self):
        assert roc_auc([1, -1, 1, -1], [0.9, 0.1, 0.4, 0.5]) == 0.75
        assert math.isnan(roc_auc([1, 1], [0.2, 0.3]))
