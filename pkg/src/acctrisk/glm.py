"""Logistic regression with inference, stepwise AIC, and L1 paths.

All fits are complete-case: rows with NaN in any used column are dropped
and counted. The lasso standardizes columns internally (zero mean, unit
variance) and reports coefficients back on the original scale; its fits
carry KKT residuals so optimality is checkable after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .metrics import midranks

# |coef| beyond this on the IRLS path flags (quasi-)perfect separation,
# roughly logit(1 - 1e-13)
SEPARATION_BOUND = 30.0

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


class GlmError(ValueError):
    pass


class PerfectSeparationError(GlmError):
    pass


class CollinearityError(GlmError):
    pass


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def _normal_sf2(z: np.ndarray) -> np.ndarray:
    """Two-sided normal p-value for Wald z statistics."""
    return np.array([math.erfc(abs(v) / math.sqrt(2.0)) for v in z])


def significance_stars(p: float) -> str:
    if p <= 0.001:
        return "***"
    if p <= 0.01:
        return "**"
    if p <= 0.05:
        return "*"
    if p <= 0.1:
        return "."
    return ""


@dataclass
class GlmModel:
    terms: list[str]  # "(Intercept)" first
    coef: np.ndarray
    std_err: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    loglik: float
    aic: float
    n_obs: int
    n_dropped: int
    n_iter: int
    converged: bool
    columns_used: list[str] = field(default_factory=list)

    def predict(self, X, columns=None) -> np.ndarray:
        """Probabilities; rows with NaN in a used column come back NaN."""
        X = np.asarray(X, dtype=np.float64)
        if columns is not None:
            pos = [columns.index(c) for c in self.columns_used]
            X = X[:, pos]
        if X.shape[1] != self.coef.shape[0] - 1:
            raise ValueError("column mismatch for GLM prediction")
        eta = self.coef[0] + X @ self.coef[1:]
        out = _sigmoid(eta)
        out[np.isnan(X).any(axis=1)] = np.nan
        return out

    def summary(self) -> str:
        lines = [
            f"{'term':<24} {'estimate':>14} {'std_error':>14} {'z':>10} {'p_value':>12}  sig",
        ]
        for i, t in enumerate(self.terms):
            lines.append(
                f"{t:<24} {self.coef[i]:>14.6e} {self.std_err[i]:>14.6e} "
                f"{self.z_values[i]:>10.4f} {self.p_values[i]:>12.4e}  {significance_stars(self.p_values[i])}"
            )
        lines.append(f"logLik {self.loglik:.6f}  AIC {self.aic:.6f}  n {self.n_obs} (dropped {self.n_dropped})")
        lines.append("Significance levels: *** 0.1%, ** 1%, * 5%, . 10%")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "glm",
            "terms": self.terms,
            "coef": [float(v) for v in self.coef],
            "std_err": [float(v) for v in self.std_err],
            "z_values": [float(v) for v in self.z_values],
            "p_values": [float(v) for v in self.p_values],
            "loglik": self.loglik,
            "aic": self.aic,
            "n_obs": self.n_obs,
            "n_dropped": self.n_dropped,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "columns_used": self.columns_used,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GlmModel":
        if payload.get("kind") != "glm":
            raise ValueError("not a GLM payload")
        return cls(
            terms=list(payload["terms"]),
            coef=np.array(payload["coef"]),
            std_err=np.array(payload["std_err"]),
            z_values=np.array(payload["z_values"]),
            p_values=np.array(payload["p_values"]),
            loglik=float(payload["loglik"]),
            aic=float(payload["aic"]),
            n_obs=int(payload["n_obs"]),
            n_dropped=int(payload["n_dropped"]),
            n_iter=int(payload["n_iter"]),
            converged=bool(payload["converged"]),
            columns_used=list(payload["columns_used"]),
        )


def _complete_cases(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    keep = ~np.isnan(X).any(axis=1)
    return X[keep], y[keep], int((~keep).sum())


def log_likelihood(X1: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X1 @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score_vector(X1: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Gradient of the log-likelihood."""
    return X1.T @ (y - _sigmoid(X1 @ beta))


def fit_logit(X, y, columns=None) -> GlmModel:
    """Maximum likelihood via iteratively reweighted least squares.

    Columns are centered and scaled internally (an exact
    reparameterization, for conditioning and a scale-free collinearity
    check); estimates and standard errors are mapped back to the
    original scale. Standard errors come from the inverse Fisher
    information at the optimum; convergence at max coefficient change
    < 1e-8 or 100 sweeps. The separation guard watches the standardized
    coefficients.
    """
    Xc, yc, n_dropped = _complete_cases(X, y)
    n, p = Xc.shape
    if n == 0:
        raise GlmError("no complete-case rows")
    uy = np.unique(yc)
    if not np.isin(uy, [0, 1]).all() or uy.shape[0] < 2:
        raise GlmError("labels must be 0/1 with both classes present")

    means = Xc.mean(axis=0) if p else np.zeros(0)
    sds = Xc.std(axis=0) if p else np.zeros(0)
    if p and (sds == 0).any():
        j = int(np.nonzero(sds == 0)[0][0])
        raise CollinearityError(f"column {j} is constant (collinear with the intercept)")
    Z = (Xc - means) / sds if p else Xc
    X1 = np.hstack([np.ones((n, 1)), Z])
    if np.linalg.matrix_rank(X1) < X1.shape[1]:
        raise CollinearityError("design matrix is rank deficient (collinear columns)")

    gamma = np.zeros(p + 1)
    converged = False
    it = 0
    for it in range(1, IRLS_MAX_ITER + 1):
        eta = X1 @ gamma
        mu = _sigmoid(eta)
        w = np.clip(mu * (1.0 - mu), 1e-10, None)
        info = (X1 * w[:, None]).T @ X1
        try:
            delta = np.linalg.solve(info, X1.T @ (yc - mu))
        except np.linalg.LinAlgError as exc:
            raise CollinearityError("Fisher information is singular") from exc
        gamma = gamma + delta
        if np.abs(gamma).max() > SEPARATION_BOUND:
            raise PerfectSeparationError(
                f"coefficients diverged beyond {SEPARATION_BOUND}; data are (quasi-)separated"
            )
        if np.abs(delta).max() < IRLS_TOL:
            converged = True
            break

    mu = _sigmoid(X1 @ gamma)
    w = np.clip(mu * (1.0 - mu), 1e-10, None)
    info = (X1 * w[:, None]).T @ X1
    cov_g = np.linalg.inv(info)

    # map gamma (standardized scale) back to the original scale
    A = np.eye(p + 1)
    for j in range(p):
        A[0, j + 1] = -means[j] / sds[j]
        A[j + 1, j + 1] = 1.0 / sds[j]
    beta = A @ gamma
    cov = A @ cov_g @ A.T
    se = np.sqrt(np.diag(cov))
    zv = beta / se
    pv = _normal_sf2(zv)
    ll = log_likelihood(X1, yc, gamma)
    k = p + 1
    names = list(columns) if columns is not None else [f"x{i}" for i in range(p)]
    return GlmModel(
        terms=["(Intercept)"] + names,
        coef=beta,
        std_err=se,
        z_values=zv,
        p_values=pv,
        loglik=ll,
        aic=2.0 * k - 2.0 * ll,
        n_obs=n,
        n_dropped=n_dropped,
        n_iter=it,
        converged=converged,
        columns_used=names,
    )


@dataclass
class StepRecord:
    step: int
    action: str  # "start" | "add" | "drop"
    column: str
    aic: float
    note: str = ""


def stepwise_select(X, y, direction: str = "both", columns=None, max_steps: int = 200):
    """Greedy AIC add/drop; returns (model, trace).

    Complete cases are fixed once on the full candidate set so AICs stay
    comparable across candidate models. Candidates that fail to fit
    (separation, collinearity) are skipped with a note in the trace.
    """
    if direction not in ("forward", "backward", "both"):
        raise ValueError("direction must be forward, backward or both")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = list(columns) if columns is not None else [f"x{i}" for i in range(X.shape[1])]
    Xc, yc, n_dropped = _complete_cases(X, y)
    if Xc.shape[0] == 0:
        raise GlmError("no complete-case rows")

    def _fit(sel):
        if sel:
            m = fit_logit(Xc[:, sel], yc, [names[j] for j in sel])
        else:
            m = fit_logit(np.empty((Xc.shape[0], 0)), yc, [])
        return m

    selected = list(range(X.shape[1])) if direction == "backward" else []
    current = _fit(selected)
    trace = [StepRecord(0, "start", "", current.aic)]
    notes: list[str] = []
    for step in range(1, max_steps + 1):
        best = None  # (aic, order, action, column index)
        order = 0
        if direction in ("forward", "both"):
            for j in range(X.shape[1]):
                if j in selected:
                    continue
                order += 1
                try:
                    m = _fit(sorted(selected + [j]))
                except GlmError as exc:
                    notes.append(f"step {step}: add {names[j]} skipped ({exc})")
                    continue
                if best is None or m.aic < best[0] - 1e-12:
                    best = (m.aic, order, "add", j, m)
        if direction in ("backward", "both"):
            for j in list(selected):
                order += 1
                try:
                    m = _fit(sorted(set(selected) - {j}))
                except GlmError as exc:
                    notes.append(f"step {step}: drop {names[j]} skipped ({exc})")
                    continue
                if best is None or m.aic < best[0] - 1e-12:
                    best = (m.aic, order, "drop", j, m)
        if best is None or best[0] >= current.aic - 1e-10:
            break
        _, _, action, j, model = best
        if action == "add":
            selected = sorted(selected + [j])
        else:
            selected = sorted(set(selected) - {j})
        current = model
        trace.append(StepRecord(step, action, names[j], current.aic))
    for n_ in notes:
        trace.append(StepRecord(-1, "note", "", float("nan"), n_))
    # reflect the upfront complete-case filtering in the reported model
    current.n_dropped = n_dropped
    return current, trace


# ---------------------------------------------------------------------------
# L1-penalized logistic regression (coordinate descent with warm starts)
# ---------------------------------------------------------------------------

LASSO_KKT_TOL = 1e-4


@dataclass
class LassoFit:
    lam: float
    intercept: float
    coef: np.ndarray  # original scale
    coef_std: np.ndarray  # standardized scale (KKT lives here)
    active: list[int]
    kkt_zero_violation: float
    kkt_active_violation: float
    n_iter: int
    converged: bool
    exact_k: bool = True  # lasso_exact_k sets False when it had to cap

    @property
    def n_active(self) -> int:
        return len(self.active)


class _LassoProblem:
    def __init__(self, X, y):
        Xc, yc, n_dropped = _complete_cases(X, y)
        if Xc.shape[0] == 0:
            raise GlmError("no complete-case rows")
        self.n_dropped = n_dropped
        self.y = yc
        self.mean = Xc.mean(axis=0)
        sd = Xc.std(axis=0)
        self.sd = sd
        self.usable = sd > 0  # constant columns keep zero coefficients
        safe = np.where(self.usable, sd, 1.0)
        self.Xs = np.ascontiguousarray((Xc - self.mean) / safe)
        self.Xs[:, ~self.usable] = 0.0
        self.n, self.p = self.Xs.shape

    def lambda_max(self) -> float:
        pbar = self.y.mean()
        g = self.Xs.T @ (self.y - pbar) / self.n
        return float(np.abs(g).max())

    def kkt(self, intercept, beta, lam):
        eta = intercept + self.Xs @ beta
        mu = _sigmoid(eta)
        g = self.Xs.T @ (mu - self.y) / self.n
        zero = beta == 0.0
        viol_zero = float(np.clip(np.abs(g[zero & self.usable]) - lam, 0.0, None).max()) if (zero & self.usable).any() else 0.0
        active = ~zero
        viol_active = float(np.abs(g[active] + lam * np.sign(beta[active])).max()) if active.any() else 0.0
        return viol_zero, viol_active

    def solve(self, lam, intercept, beta, max_outer=80, max_sweeps=600, tol=1e-9):
        """Proximal-Newton outer loop, coordinate-descent inner sweeps."""
        it = 0
        for outer in range(max_outer):
            eta = intercept + self.Xs @ beta
            mu = _sigmoid(eta)
            w = np.clip(mu * (1.0 - mu), 1e-6, None)
            zwork = eta + (self.y - mu) / w
            xsq_w = (w[:, None] * self.Xs**2).sum(axis=0) / self.n
            xsq_w[~self.usable] = 0.0
            r = zwork - intercept - self.Xs @ beta
            wsum = w.sum()
            inner_converged = False
            for sweep in range(max_sweeps):
                it += 1
                d0 = float((w * r).sum() / wsum)
                intercept += d0
                r -= d0
                maxd = _kernels.cd_sweep(self.Xs, w, r, beta, lam, xsq_w)
                if max(maxd, abs(d0)) < tol:
                    inner_converged = True
                    break
            vz, va = self.kkt(intercept, beta, lam)
            if inner_converged and vz <= LASSO_KKT_TOL * 0.5 and va <= LASSO_KKT_TOL * 0.5:
                return intercept, beta, it, True
        return intercept, beta, it, False

    def to_original(self, intercept, beta):
        safe = np.where(self.usable, self.sd, 1.0)
        coef = np.where(self.usable, beta / safe, 0.0)
        b0 = intercept - float((coef * self.mean).sum())
        return b0, coef


def fit_lasso_path(X, y, lambdas) -> list[LassoFit]:
    """Coordinate descent down a descending lambda grid with warm starts."""
    prob = _LassoProblem(X, y)
    lams = sorted(set(float(l) for l in lambdas), reverse=True)
    if not lams or lams[-1] < 0:
        raise ValueError("lambda grid must be non-negative")
    fits = []
    intercept = float(np.log(prob.y.mean() / (1.0 - prob.y.mean())))
    beta = np.zeros(prob.p)
    for lam in lams:
        intercept, beta, it, ok = prob.solve(lam, intercept, beta.copy())
        vz, va = prob.kkt(intercept, beta, lam)
        if not ok and max(vz, va) > LASSO_KKT_TOL:
            raise GlmError(f"lasso failed to converge at lambda={lam:g} (kkt {max(vz, va):.2e})")
        b0, coef = prob.to_original(intercept, beta)
        fits.append(
            LassoFit(
                lam=lam,
                intercept=b0,
                coef=coef,
                coef_std=beta.copy(),
                active=[int(j) for j in np.nonzero(beta)[0]],
                kkt_zero_violation=vz,
                kkt_active_violation=va,
                n_iter=it,
                converged=ok,
            )
        )
    return fits


def lasso_exact_k(X, y, k: int, *, max_bisect: int = 60) -> LassoFit:
    """Bisection over lambda for exactly k nonzero slopes.

    Falls back to the largest active set not exceeding k (``exact_k``
    False) when the set size jumps past k along the continuum.
    """
    prob = _LassoProblem(X, y)
    if k < 0 or k > prob.p:
        raise ValueError("k must lie in 0..p")
    lam_max = prob.lambda_max()

    def _fit_at(lam, warm=None):
        intercept = float(np.log(prob.y.mean() / (1.0 - prob.y.mean())))
        beta = np.zeros(prob.p)
        if warm is not None:
            intercept, beta = warm[0], warm[1].copy()
        intercept, beta, it, ok = prob.solve(lam, intercept, beta)
        b0, coef = prob.to_original(intercept, beta)
        vz, va = prob.kkt(intercept, beta, lam)
        return LassoFit(
            lam=lam, intercept=b0, coef=coef, coef_std=beta.copy(),
            active=[int(j) for j in np.nonzero(beta)[0]],
            kkt_zero_violation=vz, kkt_active_violation=va,
            n_iter=it, converged=ok,
        ), (intercept, beta)

    if k == 0:
        fit, _ = _fit_at(lam_max * 1.0001)
        return fit

    hi = lam_max * 1.0001  # 0 active
    fit_hi, warm_hi = _fit_at(hi)
    lo = lam_max * 1e-4
    fit_lo, warm_lo = _fit_at(lo, warm_hi)
    shrink = 0
    while fit_lo.n_active < k and shrink < 8:
        lo *= 0.1
        fit_lo, warm_lo = _fit_at(lo, warm_lo)
        shrink += 1
    if fit_lo.n_active == k:
        return fit_lo
    if fit_lo.n_active < k:
        fit_lo.exact_k = False
        return fit_lo

    best_under = fit_hi  # largest active set <= k seen so far
    for _ in range(max_bisect):
        mid = math.sqrt(lo * hi)
        fit_mid, warm_mid = _fit_at(mid, warm_lo)
        if fit_mid.n_active == k:
            return fit_mid
        if fit_mid.n_active > k:
            lo = mid
            warm_lo = warm_mid
        else:
            hi = mid
            if fit_mid.n_active > best_under.n_active:
                best_under = fit_mid
        if hi / lo < 1.0 + 1e-9:
            break
    best_under.exact_k = False
    return best_under


def spearman(x, y) -> float:
    """Pearson correlation of mid-ranks over pairwise complete cases."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("length mismatch")
    keep = ~(np.isnan(x) | np.isnan(y))
    x = x[keep]
    y = y[keep]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 pairwise-complete observations")
    if np.unique(x).shape[0] < 2 or np.unique(y).shape[0] < 2:
        raise ValueError("correlation undefined for a constant vector")
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx**2).sum() * (ry**2).sum()))
