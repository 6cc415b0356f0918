import numpy as np
import pytest

from acctrisk.boost import (
    BoostedModel,
    BoostParams,
    boost_importance,
    cv_rounds,
    fit_boost,
    loss_gradient_hessian,
    loss_values,
    predict_boost,
    sigmoid,
)


def logistic_dataset(rng, n, p, scale=1.0, intercept=-1.5):
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * scale
    y = (rng.random(n) < sigmoid(X @ beta + intercept)).astype(np.float64)
    return X, y


class TestLosses:
    def test_logistic_gradient_at_zero_score(self):
        y = np.array([0.0, 1.0])
        g, h = loss_gradient_hessian("logistic", y, np.zeros(2))
        np.testing.assert_allclose(g, [0.5, -0.5])
        np.testing.assert_allclose(h, [0.25, 0.25])

    @pytest.mark.parametrize("kind", ["logistic", "exponential"])
    def test_gradients_match_central_differences(self, kind, rng):
        y = (rng.random(100) < 0.5).astype(np.float64)
        scores = rng.normal(size=100) * 2.0
        g, h = loss_gradient_hessian(kind, y, scores)
        step = 1e-4
        up = loss_values(kind, y, scores + step)
        dn = loss_values(kind, y, scores - step)
        numeric_g = (up - dn) / (2 * step)
        np.testing.assert_allclose(g, numeric_g, rtol=1e-6, atol=1e-9)
        mid = loss_values(kind, y, scores)
        numeric_h = (up - 2 * mid + dn) / step**2
        np.testing.assert_allclose(h, numeric_h, rtol=1e-3, atol=1e-6)

    def test_unknown_loss_rejected(self):
        with pytest.raises(ValueError):
            loss_values("hinge", np.array([1.0]), np.array([0.0]))


class TestFitBasics:
    def test_single_stump_full_step_recovers_leaf_rates(self, rng):
        # balanced y, one separating feature, eta=1: one Newton step from
        # the base score lands within 1e-2 of the empirical leaf rates
        x = np.concatenate([rng.normal(-2, 0.3, 400), rng.normal(2, 0.3, 400)])
        y = np.concatenate([(rng.random(400) < 0.38), (rng.random(400) < 0.62)]).astype(np.float64)
        X = x.reshape(-1, 1)
        model = fit_boost(X, y, BoostParams(n_rounds=1, eta=1.0, max_depth=2, subsample=1.0, seed=0))
        probs = model.predict(X)
        assert len(model.trees) == 1 and model.trees[0].n_leaves == 2
        left = x < model.trees[0].threshold[0]
        assert probs[left][0] == pytest.approx(y[left].mean(), abs=1e-2)
        assert probs[~left][0] == pytest.approx(y[~left].mean(), abs=1e-2)

    def test_zero_rounds_base_rate(self, rng):
        X, y = logistic_dataset(rng, 200, 3)
        model = fit_boost(X, y, BoostParams(n_rounds=1, eta=0.1, seed=0))
        stripped = BoostedModel(
            params=model.params,
            base_score=model.base_score,
            trees=[],
            importance=np.zeros(3),
            round_log=[],
            n_features_in=3,
        )
        np.testing.assert_allclose(stripped.predict(X), y.mean())

    def test_zero_leaf_tree_changes_nothing(self, rng):
        X, y = logistic_dataset(rng, 120, 2)
        model = fit_boost(X, y, BoostParams(n_rounds=3, eta=0.1, seed=1))
        before = model.predict(X).copy()
        dead = model.trees[0].to_dict()
        for node in dead["nodes"]:
            node["value"] = 0.0
        from acctrisk.cart import DecisionTree

        model.trees.append(DecisionTree.from_dict(dead))
        np.testing.assert_array_equal(model.predict(X), before)

    def test_log_odds_equals_base_plus_leaf_values(self, rng):
        X, y = logistic_dataset(rng, 150, 4)
        model = fit_boost(X, y, BoostParams(n_rounds=25, eta=0.1, max_depth=3, seed=2))
        scores = model.decision_function(X)
        for i in range(0, 150, 17):
            total = model.base_score
            for tree in model.trees:
                total += tree.value[tree.decision_path(X[i])[-1]]
            assert scores[i] == pytest.approx(total, abs=1e-12)

    def test_constant_labels_rejected(self, rng):
        X = rng.normal(size=(30, 2))
        with pytest.raises(ValueError, match="constant"):
            fit_boost(X, np.ones(30))

    def test_determinism(self, rng):
        X, y = logistic_dataset(rng, 200, 3)
        params = BoostParams(n_rounds=20, eta=0.1, subsample=0.5, seed=5)
        m1 = fit_boost(X, y, params)
        m2 = fit_boost(X, y, params)
        np.testing.assert_array_equal(m1.predict(X), m2.predict(X))

    def test_column_mismatch_rejected(self, rng):
        X, y = logistic_dataset(rng, 100, 3)
        model = fit_boost(X, y, BoostParams(n_rounds=2, seed=0))
        with pytest.raises(ValueError, match="column mismatch"):
            predict_boost(model, rng.normal(size=(5, 6)))

    def test_serialization_roundtrip(self, rng):
        X, y = logistic_dataset(rng, 120, 3)
        model = fit_boost(X, y, BoostParams(n_rounds=8, eta=0.2, seed=3), columns=["a", "b", "c"])
        clone = BoostedModel.from_json(model.to_json())
        np.testing.assert_allclose(clone.predict(X), model.predict(X))
        np.testing.assert_allclose(clone.importance, model.importance)
        assert clone.columns == ["a", "b", "c"]

    def test_params_validated(self):
        with pytest.raises(ValueError, match="stump"):
            BoostParams(max_depth=1).validate()
        with pytest.raises(ValueError, match="eta"):
            BoostParams(eta=0.0).validate()
        with pytest.raises(ValueError, match="subsample"):
            BoostParams(subsample=1.5).validate()


class TestTrainingDynamics:
    @pytest.mark.parametrize("kind", ["logistic", "exponential"])
    def test_full_batch_loss_nonincreasing(self, kind, rng):
        X, y = logistic_dataset(rng, 300, 4)
        model = fit_boost(
            X, y, BoostParams(n_rounds=60, eta=0.3, max_depth=3, subsample=1.0, loss=kind, seed=4)
        )
        losses = [r.train_loss for r in model.round_log]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_stump_model_is_weighted_indicator_sum(self, rng):
        """With depth 2 the log-odds decomposes exactly into a base plus
        weighted below-threshold indicators, one per round."""
        X, y = logistic_dataset(rng, 250, 3)
        model = fit_boost(X, y, BoostParams(n_rounds=40, eta=0.2, max_depth=2, subsample=1.0, seed=6))
        base = model.base_score
        alphas = []  # (column, threshold, alpha); constant term folds into base
        for tree in model.trees:
            assert tree.n_leaves == 2
            left, right = tree.left[0], tree.right[0]
            alphas.append((tree.feature[0], tree.threshold[0], tree.value[left] - tree.value[right]))
            base += tree.value[right]
        scores = model.decision_function(X)
        rebuilt = np.full(X.shape[0], base)
        for col, thr, alpha in alphas:
            rebuilt += alpha * (X[:, col] < thr)
        np.testing.assert_allclose(scores, rebuilt, atol=1e-10)

    def test_losses_rank_equivalent(self):
        """Both losses target monotone transforms of the same conditional
        probability, so fitted scores should agree in rank."""
        rng = np.random.default_rng(3)
        n = 3000
        X = rng.normal(size=(n, 5))
        beta = np.array([1.2, -0.8, 0.5, 0.0, 0.3])
        y = (rng.random(n) < sigmoid(X @ beta - 1.0)).astype(np.float64)
        Xq = rng.normal(size=(1500, 5))
        from acctrisk.glm import spearman

        params = BoostParams(n_rounds=200, eta=0.05, max_depth=2, subsample=1.0, seed=2)
        p_log = fit_boost(X, y, params).predict(Xq)
        from dataclasses import replace

        p_exp = fit_boost(X, y, replace(params, loss="exponential")).predict(Xq)
        assert spearman(p_log, p_exp) > 0.95


class TestCvRounds:
    def test_singleton_grid(self, rng):
        X, y = logistic_dataset(rng, 300, 3)
        res = cv_rounds(X, y, BoostParams(n_rounds=10, eta=0.2, seed=1), 3, [10])
        assert res.best_rounds == 10
        assert res.mean_auc.shape == (1,)

    def test_requires_two_folds(self, rng):
        X, y = logistic_dataset(rng, 100, 2)
        with pytest.raises(ValueError):
            cv_rounds(X, y, BoostParams(seed=1), 1, [5])

    def test_fold_auc_matrix_shape(self, rng):
        X, y = logistic_dataset(rng, 400, 3)
        res = cv_rounds(X, y, BoostParams(n_rounds=1, eta=0.2, seed=1), 4, [5, 10, 20])
        assert res.fold_auc.shape == (4, 3)
        assert not np.isnan(res.fold_auc).any()

    def test_stumps_need_more_rounds_than_depth5(self, reference_data):
        # desk-scale version; the acceptance suite runs the full grid
        X, y = reference_data["X_tr"][:2500], reference_data["y_tr"][:2500]
        grid = [50, 100, 200, 400]
        d2 = cv_rounds(X, y, BoostParams(n_rounds=400, eta=0.05, max_depth=2, subsample=0.5, seed=3), 4, grid)
        d5 = cv_rounds(X, y, BoostParams(n_rounds=400, eta=0.05, max_depth=5, subsample=0.5, seed=3), 4, grid)
        assert d2.best_rounds > d5.best_rounds


class TestImportanceAccounting:
    def test_unused_column_zero(self, rng):
        X = rng.normal(size=(200, 3))
        X[:, 2] = 7.0
        y = (rng.random(200) < sigmoid(2 * X[:, 0])).astype(np.float64)
        model = fit_boost(X, y, BoostParams(n_rounds=20, eta=0.2, seed=1))
        assert boost_importance(model)[2] == 0.0

    def test_sum_equals_total_gain(self, rng):
        X, y = logistic_dataset(rng, 200, 4)
        model = fit_boost(X, y, BoostParams(n_rounds=15, eta=0.2, seed=2))
        total = 0.0
        for tree in model.trees:
            internal = tree.feature >= 0
            total += tree.gain[internal].sum()
        assert boost_importance(model).sum() == pytest.approx(total, rel=1e-12)

    def test_noisy_duplicate_gets_little_credit(self):
        """A strictly dominated copy of a signal column is rarely chosen."""
        rng = np.random.default_rng(0)
        n = 4000
        x = rng.standard_normal(n)
        copy = x + rng.normal(0, 0.4, n)
        other = rng.standard_normal((n, 8))
        y = (rng.random(n) < sigmoid(1.5 * x - 2.5)).astype(np.float64)
        X = np.column_stack([x, copy, other])
        params = BoostParams(n_rounds=60, eta=0.3, max_depth=3, subsample=1.0, min_child_weight=20.0, seed=1)
        model = fit_boost(X, y, params)
        imp = model.importance
        from acctrisk.metrics import single_variable_auc

        assert abs(single_variable_auc(x, y) - single_variable_auc(copy, y)) < 0.03
        assert imp[1] < 0.2 * imp[0]
