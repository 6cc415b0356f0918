import math

import numpy as np
import pytest

from acctrisk.glm import (
    CollinearityError,
    GlmError,
    LassoFit,
    PerfectSeparationError,
    fit_lasso_path,
    fit_logit,
    lasso_exact_k,
    log_likelihood,
    score_vector,
    significance_stars,
    spearman,
    stepwise_select,
)


def newton_logit_oracle(X, y, max_iter=200, tol=1e-12):
    """Straight Newton on the raw log-likelihood.

    Independent of the package's IRLS (no standardization, no weights
    clipping): assembles gradient and Hessian directly and solves.
    """
    X1 = np.hstack([np.ones((X.shape[0], 1)), X])
    beta = np.zeros(X1.shape[1])
    for _ in range(max_iter):
        eta = X1 @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = X1.T @ (y - p)
        hess = -(X1 * (p * (1 - p))[:, None]).T @ X1
        step = np.linalg.solve(hess, grad)
        beta = beta - step
        if np.abs(step).max() < tol:
            break
    return beta


def random_logit_dataset(rng, n=None, p=None):
    n = n or int(rng.integers(60, 150))
    p = p or int(rng.integers(1, 5))
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p)
    eta = X @ beta * 0.8
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.float64)
    if y.sum() in (0, n):
        return random_logit_dataset(rng, n, p)
    return X, y


class TestFitLogit:
    def test_intercept_only_closed_form(self):
        y = np.array([1.0] * 20 + [0.0] * 80)
        m = fit_logit(np.empty((100, 0)), y)
        assert m.coef[0] == pytest.approx(math.log(0.2 / 0.8), abs=1e-8)
        assert m.aic == pytest.approx(2.0 - 2.0 * m.loglik)

    def test_matches_newton_oracle(self, rng):
        for _ in range(20):
            X, y = random_logit_dataset(rng)
            m = fit_logit(X, y)
            want = newton_logit_oracle(X, y)
            np.testing.assert_allclose(m.coef, want, rtol=0, atol=1e-6)

    def test_score_matches_finite_differences(self, rng):
        X, y = random_logit_dataset(rng, n=80, p=3)
        X1 = np.hstack([np.ones((80, 1)), X])
        beta = rng.normal(size=4) * 0.3
        analytic = score_vector(X1, y, beta)
        step = 1e-5
        for j in range(4):
            e = np.zeros(4)
            e[j] = step
            numeric = (log_likelihood(X1, y, beta + e) - log_likelihood(X1, y, beta - e)) / (2 * step)
            assert numeric == pytest.approx(analytic[j], rel=1e-5, abs=1e-7)

    def test_complete_case_counting(self, rng):
        X, y = random_logit_dataset(rng, n=100, p=2)
        X[:10, 0] = np.nan
        m = fit_logit(X, y)
        assert m.n_dropped == 10
        assert m.n_obs == 90

    def test_collinear_columns_detected(self, rng):
        X, y = random_logit_dataset(rng, n=80, p=2)
        X = np.column_stack([X, X[:, 0] * 2.0 - X[:, 1]])
        with pytest.raises(CollinearityError):
            fit_logit(X, y)

    def test_perfect_separation_detected(self):
        x = np.concatenate([np.linspace(-2, -0.1, 30), np.linspace(0.1, 2, 30)])
        y = (x > 0).astype(np.float64)
        with pytest.raises(PerfectSeparationError):
            fit_logit(x.reshape(-1, 1), y)

    def test_empty_data_rejected(self):
        with pytest.raises(GlmError):
            fit_logit(np.full((3, 1), np.nan), np.array([0.0, 1.0, 0.0]))

    def test_wald_p_invariant_under_rescaling(self, rng):
        X, y = random_logit_dataset(rng, n=200, p=3)
        m1 = fit_logit(X, y)
        X2 = X.copy()
        X2[:, 1] *= 1e4
        m2 = fit_logit(X2, y)
        np.testing.assert_allclose(m1.p_values, m2.p_values, rtol=1e-6, atol=1e-10)
        assert m2.coef[2] == pytest.approx(m1.coef[2] / 1e4, rel=1e-6)
        assert m2.std_err[2] == pytest.approx(m1.std_err[2] / 1e4, rel=1e-6)

    def test_summary_has_stars_legend(self, rng):
        X, y = random_logit_dataset(rng, n=150, p=2)
        text = fit_logit(X, y, ["a", "b"]).summary()
        assert "Significance levels" in text
        assert "(Intercept)" in text

    def test_star_thresholds(self):
        assert significance_stars(0.0005) == "***"
        assert significance_stars(0.005) == "**"
        assert significance_stars(0.03) == "*"
        assert significance_stars(0.07) == "."
        assert significance_stars(0.5) == ""


class TestStepwise:
    def test_no_improvement_returns_intercept_model(self, rng):
        X = rng.normal(size=(200, 3))  # pure noise
        y = (rng.random(200) < 0.5).astype(np.float64)
        model, trace = stepwise_select(X, y, "forward")
        # either intercept-only, or any accepted step strictly improved AIC
        aics = [t.aic for t in trace if t.action in ("start", "add", "drop")]
        assert all(b < a for a, b in zip(aics, aics[1:]))

    def test_accepted_aic_strictly_decreasing(self, reference_data):
        X = reference_data["X_tr"][:800, :10]
        y = reference_data["y_tr"][:800]
        model, trace = stepwise_select(X, y, "both")
        aics = [t.aic for t in trace if t.action in ("start", "add", "drop")]
        assert all(b < a for a, b in zip(aics, aics[1:]))
        intercept_aic = aics[0]
        assert model.aic <= intercept_aic

    def test_forward_backward_recover_planted_signals(self, rng):
        n, p = 900, 30
        X = rng.normal(size=(n, p))
        planted = [2, 7, 11, 19, 28]
        eta = -2.0 + sum(0.9 * X[:, j] for j in planted)
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.float64)
        cols = [f"x{j}" for j in range(p)]
        fwd, _ = stepwise_select(X, y, "forward", cols)
        bwd, _ = stepwise_select(X, y, "backward", cols)
        names = [f"x{j}" for j in planted]
        fwd_hits = sum(1 for nm in names if nm in fwd.terms)
        bwd_hits = sum(1 for nm in names if nm in bwd.terms)
        assert fwd_hits >= 4
        assert bwd_hits >= 4

    def test_direction_validated(self, rng):
        X, y = random_logit_dataset(rng, n=50, p=2)
        with pytest.raises(ValueError, match="direction"):
            stepwise_select(X, y, "sideways")


class TestLasso:
    def kkt_ok(self, fit: LassoFit, tol=1e-4):
        return fit.kkt_zero_violation <= tol and fit.kkt_active_violation <= tol

    def test_lambda_max_gives_null_model(self, rng):
        X, y = random_logit_dataset(rng, n=150, p=5)
        from acctrisk.glm import _LassoProblem

        lam_max = _LassoProblem(X, y).lambda_max()
        fits = fit_lasso_path(X, y, [lam_max * 1.01])
        assert fits[0].n_active == 0
        assert self.kkt_ok(fits[0])

    def test_lambda_zero_matches_mle(self, rng):
        X, y = random_logit_dataset(rng, n=300, p=4)
        mle = fit_logit(X, y)
        fits = fit_lasso_path(X, y, [0.0])
        np.testing.assert_allclose(fits[0].coef, mle.coef[1:], atol=1e-4)
        assert fits[0].intercept == pytest.approx(mle.coef[0], abs=1e-4)

    def test_path_kkt_and_monotone_endpoints(self, rng):
        X, y = random_logit_dataset(rng, n=250, p=8)
        from acctrisk.glm import _LassoProblem

        lam_max = _LassoProblem(X, y).lambda_max()
        grid = lam_max * np.geomspace(1.0, 1e-3, 12)
        fits = fit_lasso_path(X, y, grid)
        for f in fits:
            assert self.kkt_ok(f), f.lam
        assert fits[-1].n_active >= fits[0].n_active

    def test_constant_column_stays_zero(self, rng):
        X, y = random_logit_dataset(rng, n=150, p=3)
        X = np.column_stack([X, np.full(150, 2.5)])
        fits = fit_lasso_path(X, y, [0.01])
        assert fits[0].coef[3] == 0.0

    def test_exact_k_zero_is_intercept_only(self, rng):
        X, y = random_logit_dataset(rng, n=120, p=4)
        fit = lasso_exact_k(X, y, 0)
        assert fit.n_active == 0

    def test_exact_k_full(self, rng):
        rng2 = np.random.default_rng(77)
        X = rng2.normal(size=(400, 4))
        eta = X @ np.array([1.0, -0.8, 0.6, 0.9])
        y = (rng2.random(400) < 1 / (1 + np.exp(-eta))).astype(np.float64)
        fit = lasso_exact_k(X, y, 4)
        assert fit.n_active == 4
        assert self.kkt_ok(fit)

    def test_exact_k_eight_of_thirty(self, reference_data):
        X = reference_data["X_tr"][:, :30]
        y = reference_data["y_tr"]
        keep = ~np.isnan(X).any(axis=1)
        fit = lasso_exact_k(X[keep], y[keep], 8)
        assert fit.n_active == 8
        assert fit.exact_k
        assert self.kkt_ok(fit)


class TestSpearman:
    def test_identity(self, rng):
        x = rng.normal(size=30)
        assert spearman(x, x) == pytest.approx(1.0)

    def test_negation(self, rng):
        x = rng.normal(size=30)
        assert spearman(x, -x) == pytest.approx(-1.0)

    def test_tie_midranks(self):
        assert spearman([1.0, 2.0, 2.0, 4.0], [10.0, 20.0, 20.0, 40.0]) == pytest.approx(1.0)

    def test_constant_vector_flagged(self):
        with pytest.raises(ValueError, match="constant"):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_pairwise_complete_cases(self):
        x = [1.0, 2.0, np.nan, 4.0, 5.0]
        y = [2.0, 4.0, 9.0, 8.0, np.nan]
        assert spearman(x, y) == pytest.approx(1.0)

    def test_invariant_under_increasing_transforms(self, rng):
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        base = spearman(x, y)
        assert spearman(np.exp(x), y) == pytest.approx(base, abs=1e-12)
        assert spearman(x, y**3) == pytest.approx(base, abs=1e-12)


class TestSelectionAgreement:
    def test_stepwise_and_lasso_agree_on_planted_panel(self, reference_data):
        """On the reference panel the two logistic selection routes agree on
        at least 6 of 8 variables."""
        X = reference_data["X_tr"]
        y = reference_data["y_tr"]
        cols = reference_data["f_tr"].columns
        model, _ = stepwise_select(X, y, "both", cols)
        step_sel = {t for t in model.terms if t != "(Intercept)"}
        fit8 = lasso_exact_k(X, y, 8)
        lasso_sel = {cols[j] for j in fit8.active}
        assert fit8.n_active == 8
        assert len(step_sel & lasso_sel) >= 6
