import numpy as np
import pytest

from acctrisk.cart import TreeParams, fit_tree
from acctrisk.ensemble import (
    EnsembleVarianceReport,
    Forest,
    ForestParams,
    fit_forest,
    forest_importance,
    oob_predictions,
    predict_forest,
    predicted_mean_variance,
    rank_importance,
    stratified_sample,
    tree_output_matrix,
    variance_report,
)
from acctrisk.metrics import auc, confusion


def logistic_dataset(rng, n, p, beta=None, intercept=-2.0):
    X = rng.normal(size=(n, p))
    beta = beta if beta is not None else rng.normal(size=p)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-(X @ beta + intercept)))).astype(np.float64)
    return X, y


class TestStratifiedSample:
    def test_two_thirds_of_defaults_plus_equal_nondefaults(self):
        y = np.array([1] * 300 + [0] * 9700)
        rows = stratified_sample(y, 2.0 / 3.0, seed=1)
        taken = y[rows]
        assert taken.sum() == 200
        assert len(taken) == 400

    def test_zero_defaults_rejected(self):
        with pytest.raises(ValueError, match="zero default"):
            stratified_sample(np.zeros(50), 2.0 / 3.0, seed=0)

    def test_balanced_for_all_seeds(self):
        y = np.array([1] * 40 + [0] * 400)
        for seed in range(100):
            rows = stratified_sample(y, 2.0 / 3.0, seed=seed)
            taken = y[rows]
            assert taken.sum() * 2 == len(taken)
            # without replacement within each class
            assert len(np.unique(rows)) == len(rows)


class TestForest:
    def test_degenerate_single_tree_equals_cart(self, rng):
        X, y = logistic_dataset(rng, 120, 4)
        params = ForestParams(n_trees=1, fraction=1.0, mtry=4, sampling="uniform", seed=3)
        forest = fit_forest(X, y, params)
        tree = fit_tree(X, y, params=TreeParams(max_depth=64, min_node_size=1, mtry=4),
                        rng=np.random.default_rng(3 + 0))
        # same sample (all rows) and same rng stream position after the draw
        rng_b = np.random.default_rng(3)
        rng_b.permutation(120)
        tree = fit_tree(X, y, params=TreeParams(max_depth=64, min_node_size=1, mtry=4), rng=rng_b)
        np.testing.assert_allclose(predict_forest(forest, X), tree.predict(X))

    def test_determinism(self, rng):
        X, y = logistic_dataset(rng, 200, 5)
        params = ForestParams(n_trees=10, seed=11)
        f1 = fit_forest(X, y, params)
        f2 = fit_forest(X, y, params)
        np.testing.assert_array_equal(predict_forest(f1, X), predict_forest(f2, X))

    def test_parallel_matches_serial(self, rng):
        X, y = logistic_dataset(rng, 200, 5)
        params = ForestParams(n_trees=8, seed=4)
        f1 = fit_forest(X, y, params, n_jobs=1)
        f2 = fit_forest(X, y, params, n_jobs=4)
        np.testing.assert_array_equal(predict_forest(f1, X), predict_forest(f2, X))

    def test_mean_of_tree_probabilities(self, rng):
        X, y = logistic_dataset(rng, 150, 4)
        forest = fit_forest(X, y, ForestParams(n_trees=7, seed=2))
        T = tree_output_matrix(forest, X)
        np.testing.assert_allclose(predict_forest(forest, X), T.mean(axis=0))

    def test_predictions_within_tree_range(self, rng):
        X, y = logistic_dataset(rng, 200, 4)
        forest = fit_forest(X, y, ForestParams(n_trees=15, seed=6))
        Xq = rng.normal(size=(50, 4))
        T = tree_output_matrix(forest, Xq)
        p = predict_forest(forest, Xq)
        assert (p >= T.min(axis=0) - 1e-12).all()
        assert (p <= T.max(axis=0) + 1e-12).all()

    def test_column_mismatch_rejected(self, rng):
        X, y = logistic_dataset(rng, 100, 3)
        forest = fit_forest(X, y, ForestParams(n_trees=2, seed=1))
        with pytest.raises(ValueError, match="column mismatch"):
            predict_forest(forest, rng.normal(size=(5, 7)))

    def test_serialization_roundtrip(self, rng):
        X, y = logistic_dataset(rng, 120, 3)
        forest = fit_forest(X, y, ForestParams(n_trees=4, seed=9), columns=["a", "b", "c"])
        clone = Forest.from_json(forest.to_json())
        np.testing.assert_allclose(predict_forest(clone, X), predict_forest(forest, X))
        assert clone.columns == ["a", "b", "c"]
        assert clone.tree_seeds == forest.tree_seeds


class TestOob:
    def test_oob_close_to_holdout(self, rng):
        X, y = logistic_dataset(rng, 3000, 5, beta=np.array([1.2, -0.8, 0.6, 0.0, 0.0]))
        X_te, _ = logistic_dataset(rng, 1, 5)  # unused; split below
        tr = slice(0, 2000)
        te = slice(2000, 3000)
        forest = fit_forest(X[tr], y[tr], ForestParams(n_trees=60, seed=7))
        oob = oob_predictions(forest, X[tr])
        ok = ~np.isnan(oob)
        oob_auc = auc(oob[ok], y[tr][ok])
        held_auc = auc(predict_forest(forest, X[te]), y[te])
        assert abs(oob_auc - held_auc) < 0.03

    def test_every_row_eventually_oob(self, rng):
        X, y = logistic_dataset(rng, 300, 3)
        forest = fit_forest(X, y, ForestParams(n_trees=40, seed=1))
        oob = oob_predictions(forest, X)
        assert np.isnan(oob).sum() == 0


class TestImbalancePattern:
    def test_balanced_mode_fixes_minority_error(self, reference_data):
        """Desk-scale rerun of the imbalanced-vs-balanced error pattern."""
        X_tr, y_tr = reference_data["X_tr"], reference_data["y_tr"]
        X_te, y_te = reference_data["X_te"], reference_data["y_te"]
        uni = fit_forest(X_tr, y_tr, ForestParams(n_trees=60, sampling="uniform", seed=5))
        bal = fit_forest(X_tr, y_tr, ForestParams(n_trees=60, sampling="balanced", seed=5))
        c_uni = confusion(predict_forest(uni, X_te), y_te, 0.5)
        c_bal = confusion(predict_forest(bal, X_te), y_te, 0.5)
        assert c_uni.class1_error > 0.8
        assert c_bal.class1_error < 0.4
        a_uni = auc(predict_forest(uni, X_te), y_te)
        a_bal = auc(predict_forest(bal, X_te), y_te)
        assert abs(a_uni - a_bal) < 0.03
        assert c_uni.class1_error - c_bal.class1_error > 0.4


class TestImportance:
    def test_unused_column_zero(self, rng):
        X = rng.normal(size=(300, 3))
        X[:, 2] = 1.0  # constant
        y = (X[:, 0] + 0.5 * rng.normal(size=300) > 0).astype(np.float64)
        forest = fit_forest(X, y, ForestParams(n_trees=10, mtry=3, seed=2))
        imp = forest_importance(forest)
        assert imp[2] == 0.0

    def test_planted_signal_ranks_first(self, rng):
        X = rng.normal(size=(500, 6))
        y = (rng.random(500) < 1 / (1 + np.exp(-2.5 * X[:, 3]))).astype(np.float64)
        forest = fit_forest(X, y, ForestParams(n_trees=30, seed=3))
        ranked = rank_importance(forest_importance(forest), [f"c{i}" for i in range(6)])
        assert ranked[0][0] == "c3"

    def test_sum_equals_total_decrease_over_trees(self, rng):
        X, y = logistic_dataset(rng, 200, 4)
        forest = fit_forest(X, y, ForestParams(n_trees=9, seed=4))
        imp = forest_importance(forest)
        total = 0.0
        for tree in forest.trees:
            internal = tree.feature >= 0
            total += float((tree.weight[internal] * tree.gain[internal]).sum())
        assert imp.sum() == pytest.approx(total / 9, rel=1e-12)

    def test_rank_ties_break_by_column(self):
        ranked = rank_importance(np.array([1.0, 2.0, 2.0]), ["a", "b", "c"])
        assert [r[0] for r in ranked] == ["b", "c", "a"]


class TestVarianceDiagnostics:
    def test_identity_at_rho_one(self):
        assert predicted_mean_variance(1.0, 0.04, 50) == pytest.approx(0.04)

    def test_identity_at_rho_zero(self):
        assert predicted_mean_variance(0.0, 0.04, 50) == pytest.approx(0.04 / 50)

    def test_identical_trees_report_rho_one(self, rng):
        X, y = logistic_dataset(rng, 150, 3)
        # fraction 1.0 without replacement and full mtry -> identical trees
        forest = fit_forest(X, y, ForestParams(n_trees=4, fraction=1.0, mtry=3, seed=8))
        rep = variance_report(forest, X[:60])
        assert rep.rho == pytest.approx(1.0)
        assert rep.sigma2 == pytest.approx(0.0, abs=1e-15)
        assert rep.predicted == pytest.approx(rep.sigma2, abs=1e-15)

    def test_uncorrelated_synthetic_outputs(self, rng):
        # hand-built forest stand-in: directly exercise the estimators on
        # an iid tree-output matrix
        from acctrisk.ensemble import _mean_pairwise_corr

        T = rng.normal(size=(30, 400))
        rho = _mean_pairwise_corr(T)
        assert abs(rho) < 0.02
        sigma2 = T.var(axis=0, ddof=1).mean()
        assert predicted_mean_variance(0.0, sigma2, 30) == pytest.approx(sigma2 / 30)

    def test_small_mtry_decorrelates_trees(self, reference_data):
        X_tr, y_tr = reference_data["X_tr"][:1500], reference_data["y_tr"][:1500]
        X_ho = reference_data["X_te"][:400]
        full = fit_forest(X_tr, y_tr, ForestParams(n_trees=40, mtry=30, seed=2))
        rooted = fit_forest(X_tr, y_tr, ForestParams(n_trees=40, mtry=5, seed=2))
        rep_full = variance_report(full, X_ho)
        rep_rooted = variance_report(rooted, X_ho)
        assert rep_rooted.rho < rep_full.rho

    def test_needs_two_trees(self, rng):
        X, y = logistic_dataset(rng, 80, 2)
        forest = fit_forest(X, y, ForestParams(n_trees=1, seed=1))
        with pytest.raises(ValueError, match="2 trees"):
            variance_report(forest, X)

    def test_predicted_matches_bootstrap_refits(self, rng):
        """Monte-Carlo check of the correlated-average variance identity."""
        X, y = logistic_dataset(rng, 700, 5, beta=np.array([1.0, -0.7, 0.5, 0.0, 0.0]))
        X_ho = rng.normal(size=(250, 5))
        params = ForestParams(n_trees=100, mtry=2, seed=3, max_depth=6, min_node_size=10)
        forest = fit_forest(X, y, params)
        rep = variance_report(forest, X_ho, train=(X, y), n_refits=120, seed=17)
        assert rep.empirical > 0
        assert rep.predicted == pytest.approx(rep.empirical, rel=0.15)
        assert isinstance(rep, EnsembleVarianceReport)


class TestGeneratorScaleChecks:
    def test_oob_error_tracks_holdout_at_scale(self):
        from acctrisk import features, synthgen
        from acctrisk.metrics import confusion
        from acctrisk.panel import split_random

        cfg = synthgen.SynthConfig(n_firms=10000, base_default_rate=0.06, seed=19)
        panel, _ = synthgen.generate_panel(cfg)
        train, test = split_random(panel, 0.3, 5)
        enc = features.fit_sector_encoding(train)
        f_tr = features.compute_def1(train, enc)
        f_te = features.compute_def1(test, enc)
        y_tr = features.default_label_vector(train, f_tr)
        y_te = features.default_label_vector(test, f_te)
        forest = fit_forest(f_tr.to_dense(), y_tr, ForestParams(n_trees=60, sampling="balanced", seed=5))
        oob = oob_predictions(forest, f_tr.to_dense())
        ok = ~np.isnan(oob)
        oob_err = confusion(oob[ok], y_tr[ok], 0.5).global_error
        held_err = confusion(predict_forest(forest, f_te.to_dense()), y_te, 0.5).global_error
        assert abs(oob_err - held_err) < 0.03

    def test_single_planted_driver_dominates_importance(self):
        from acctrisk import features, synthgen

        weights = {k: 0.0 for k in synthgen.DEFAULT_SIGNAL_WEIGHTS}
        weights["violation_intensity"] = 1.2
        cfg = synthgen.SynthConfig(n_firms=4000, base_default_rate=0.07, signal_weights=weights, seed=31)
        panel, _ = synthgen.generate_panel(cfg)
        fm = features.compute_def1(panel, features.fit_sector_encoding(panel))
        y = features.default_label_vector(panel, fm)
        forest = fit_forest(fm.to_dense(), y, ForestParams(n_trees=40, sampling="balanced", seed=2))
        ranked = rank_importance(forest_importance(forest), fm.columns)
        # the violation-count columns carry the only direct signal
        assert ranked[0][0] == "var9"
        assert "var11" in [name for name, _ in ranked[:3]]
