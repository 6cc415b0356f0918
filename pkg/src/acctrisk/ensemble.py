"""Random forests: uniform and class-balanced sampling, OOB, importance.

Two sampling modes per tree:

* ``uniform``: a uniform draw of ``fraction`` of all rows, without
  replacement by default (``with_replacement=True`` restores the classic
  bootstrap),
* ``balanced``: ``floor(fraction * n_default)`` default rows plus an
  equal count of non-default rows, both without replacement; the remedy
  of choice for heavily imbalanced panels.

Trees grow to purity by default (min_node_size 1) under a safety depth
cap. Per-tree seeds are ``seed + tree ordinal`` so parallel and serial
runs agree.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .cart import DecisionTree, TreeParams, as_float_matrix, fit_tree, tree_importance


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int = 0  # 0 = floor(sqrt(p)), at least 1
    sampling: str = "uniform"  # "uniform" | "balanced"
    fraction: float = 2.0 / 3.0
    with_replacement: bool = False
    min_node_size: int = 1
    max_depth: int = 64
    seed: int = 0

    def validate(self, n_features: int):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.mtry < 0 or self.mtry > n_features:
            raise ValueError("mtry must lie in 0..n_features")
        if self.sampling not in ("uniform", "balanced"):
            raise ValueError("sampling must be 'uniform' or 'balanced'")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")


@dataclass
class Forest:
    params: ForestParams
    trees: list[DecisionTree]
    in_bag: list[np.ndarray]
    tree_seeds: list[int]
    n_features_in: int
    n_train: int
    columns: list[str] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "forest",
            "params": {
                "n_trees": self.params.n_trees,
                "mtry": self.params.mtry,
                "sampling": self.params.sampling,
                "fraction": self.params.fraction,
                "with_replacement": self.params.with_replacement,
                "min_node_size": self.params.min_node_size,
                "max_depth": self.params.max_depth,
                "seed": self.params.seed,
            },
            "tree_seeds": list(self.tree_seeds),
            "n_features": self.n_features_in,
            "n_train": self.n_train,
            "columns": self.columns,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Forest":
        if payload.get("kind") != "forest":
            raise ValueError("not a forest payload")
        return cls(
            params=ForestParams(**payload["params"]),
            trees=[DecisionTree.from_dict(t) for t in payload["trees"]],
            in_bag=[],
            tree_seeds=list(payload["tree_seeds"]),
            n_features_in=int(payload["n_features"]),
            n_train=int(payload["n_train"]),
            columns=payload.get("columns"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        return cls.from_dict(json.loads(text))


def stratified_sample(y, fraction: float, seed) -> np.ndarray:
    """floor(fraction * n_default) defaults plus as many non-defaults, w/o replacement."""
    y = np.asarray(y)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pos = np.nonzero(y == 1)[0]
    neg = np.nonzero(y == 0)[0]
    if pos.shape[0] == 0:
        raise ValueError("zero default observations; balanced sampling undefined")
    if neg.shape[0] == 0:
        raise ValueError("zero non-default observations")
    k = int(np.floor(fraction * pos.shape[0]))
    k = max(k, 1)
    if k > neg.shape[0]:
        raise ValueError("not enough non-default observations for a balanced draw")
    take_pos = pos[rng.permutation(pos.shape[0])[:k]]
    take_neg = neg[rng.permutation(neg.shape[0])[:k]]
    return np.sort(np.concatenate([take_pos, take_neg]))


def _draw_rows(y, params: ForestParams, rng) -> np.ndarray:
    n = y.shape[0]
    if params.sampling == "balanced":
        return stratified_sample(y, params.fraction, rng)
    k = max(int(np.floor(params.fraction * n)), 1)
    if params.with_replacement:
        return np.sort(rng.integers(0, n, size=k))
    return np.sort(rng.permutation(n)[:k])


def fit_forest(X, y, params: ForestParams | None = None, columns=None, n_jobs: int = 1) -> Forest:
    """Grow n_trees CARTs, each on its own row sample with mtry candidate columns."""
    params = params or ForestParams()
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    params.validate(X.shape[1])
    classes, counts = np.unique(y, return_counts=True)
    if classes.shape[0] != 2 or (counts < 2).any():
        raise ValueError("need a binary label with at least 2 rows per class")
    p = X.shape[1]
    mtry = params.mtry if params.mtry > 0 else max(1, int(np.floor(np.sqrt(p))))
    tree_params = TreeParams(
        max_depth=params.max_depth, min_node_size=params.min_node_size, mtry=mtry
    )

    def _one(b: int):
        rng = np.random.default_rng(params.seed + b)
        rows = _draw_rows(y, params, rng)
        tree = fit_tree(X[rows], y[rows], None, tree_params, rng=rng)
        return tree, np.unique(rows)

    seeds = [params.seed + b for b in range(params.n_trees)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(_one, range(params.n_trees)))
    else:
        fitted = [_one(b) for b in range(params.n_trees)]
    trees = [t for t, _ in fitted]
    in_bag = [bag for _, bag in fitted]
    cols = list(columns) if columns is not None else None
    return Forest(params, trees, in_bag, seeds, p, X.shape[0], cols)


def predict_forest(forest: Forest, X) -> np.ndarray:
    """Mean of tree probabilities; threshold at 0.5 for majority-vote labels."""
    X = as_float_matrix(X)
    if X.shape[1] != forest.n_features_in:
        raise ValueError(
            f"column mismatch: forest expects {forest.n_features_in}, got {X.shape[1]}"
        )
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += tree.predict(X)
    return acc / len(forest.trees)


def tree_output_matrix(forest: Forest, X) -> np.ndarray:
    X = as_float_matrix(X)
    return np.stack([t.predict(X) for t in forest.trees])


def oob_predictions(forest: Forest, X) -> np.ndarray:
    """Out-of-bag probability per training row; NaN where never out-of-bag."""
    if not forest.in_bag:
        raise ValueError("forest was restored without in-bag bookkeeping")
    X = as_float_matrix(X)
    n = X.shape[0]
    if n != forest.n_train:
        raise ValueError("OOB prediction needs the original training rows")
    acc = np.zeros(n)
    cnt = np.zeros(n)
    for tree, bag in zip(forest.trees, forest.in_bag):
        oob = np.ones(n, dtype=bool)
        oob[bag] = False
        if not oob.any():
            continue
        acc[oob] += tree.predict(X[oob])
        cnt[oob] += 1.0
    out = np.full(n, np.nan)
    seen = cnt > 0
    out[seen] = acc[seen] / cnt[seen]
    return out


def forest_importance(forest: Forest) -> np.ndarray:
    """Per-column weighted Gini decreases summed over all trees, averaged over B."""
    imp = np.zeros(forest.n_features_in)
    for tree in forest.trees:
        imp += tree_importance(tree, forest.n_features_in)
    return imp / len(forest.trees)


def rank_importance(importance: np.ndarray, columns=None) -> list[tuple[str, float]]:
    """Descending importance with deterministic ties (lower column first)."""
    order = np.lexsort((np.arange(importance.shape[0]), -importance))
    names = columns if columns is not None else [str(i) for i in range(importance.shape[0])]
    return [(names[i], float(importance[i])) for i in order]


# ---------------------------------------------------------------------------
# variance diagnostics for the averaged ensemble
# ---------------------------------------------------------------------------

@dataclass
class EnsembleVarianceReport:
    rho: float
    sigma2: float
    predicted: float
    empirical: float
    n_trees: int
    n_refits: int = 0


def predicted_mean_variance(rho: float, sigma2: float, n_trees: int) -> float:
    """Variance of the average of n identically distributed, rho-correlated variables."""
    return rho * sigma2 + (1.0 - rho) * sigma2 / n_trees


def _mean_pairwise_corr(T: np.ndarray) -> float:
    """Mean correlation over tree pairs, computed across rows.

    Pairs of constant-and-equal outputs count as correlation 1 (the
    identical-trees limit); constant-but-different pairs as 0.
    """
    B = T.shape[0]
    centered = T - T.mean(axis=1, keepdims=True)
    sd = centered.std(axis=1)
    cov = centered @ centered.T / T.shape[1]
    vals = []
    for a in range(B):
        for b in range(a + 1, B):
            if sd[a] == 0.0 or sd[b] == 0.0:
                vals.append(1.0 if np.array_equal(T[a], T[b]) else 0.0)
            else:
                vals.append(cov[a, b] / (sd[a] * sd[b]))
    return float(np.mean(vals)) if vals else float("nan")


def variance_report(
    forest: Forest,
    X_rows,
    *,
    train=None,
    n_refits: int = 0,
    seed: int = 0,
) -> EnsembleVarianceReport:
    """Check the correlated-average variance identity on held-out rows.

    Without refit data: sigma2 is the mean over rows of the across-tree
    output variance, rho the mean pairwise tree correlation across rows,
    and ``empirical`` is NaN.

    With ``train=(X, y)`` and ``n_refits >= 4``: the forest is refit on
    bootstrap resamples of the training rows. Half the refits estimate
    the per-row tree variance and the within-refit pair covariance (hence
    rho); the other half measure the variance of the ensemble mean
    directly. ``predicted`` averages the pointwise identity
    ``rho*sigma2 + (1-rho)*sigma2/B`` over rows.
    """
    if len(forest.trees) < 2:
        raise ValueError("need at least 2 trees")
    X_rows = as_float_matrix(X_rows)
    B = len(forest.trees)

    if train is None:
        T = tree_output_matrix(forest, X_rows)
        sigma2_rows = T.var(axis=0, ddof=1)
        sigma2 = float(sigma2_rows.mean())
        rho = _mean_pairwise_corr(T)
        predicted = predicted_mean_variance(rho, sigma2, B)
        return EnsembleVarianceReport(rho, sigma2, predicted, float("nan"), B, 0)

    if n_refits < 4:
        raise ValueError("need n_refits >= 4 with training data")
    X_tr, y_tr = train
    X_tr = as_float_matrix(X_tr)
    y_tr = np.asarray(y_tr, dtype=np.float64)
    n = X_tr.shape[0]
    rng = np.random.default_rng(seed)
    half = n_refits // 2

    est_T = []  # refit tree outputs for the estimation half
    emp_means = []  # ensemble means for the empirical half
    for r in range(n_refits):
        rows = rng.integers(0, n, size=n)
        yb = y_tr[rows]
        if np.unique(yb).shape[0] < 2:
            rows = np.arange(n)
            yb = y_tr
        refit = fit_forest(X_tr[rows], yb, replace(forest.params, seed=seed * 100003 + r))
        T = tree_output_matrix(refit, X_rows)
        if r < half:
            est_T.append(T)
        else:
            emp_means.append(T.mean(axis=0))

    stackT = np.stack(est_T)  # [R, B, rows]
    mu = stackT.mean(axis=(0, 1))
    sigma2_rows = ((stackT - mu) ** 2).mean(axis=(0, 1))
    s = stackT.sum(axis=1)
    q = (stackT**2).sum(axis=1)
    pair_mean = ((s**2 - q) / (B * (B - 1))).mean(axis=0)
    cov_rows = np.clip(pair_mean - mu**2, 0.0, None)
    predicted_rows = cov_rows + (sigma2_rows - cov_rows) / B
    ok = sigma2_rows > 0
    rho = float((cov_rows[ok] / sigma2_rows[ok]).mean()) if ok.any() else 1.0
    sigma2 = float(sigma2_rows.mean())
    predicted = float(predicted_rows.mean())
    empirical = float(np.stack(emp_means).var(axis=0, ddof=1).mean())
    return EnsembleVarianceReport(rho, sigma2, predicted, empirical, B, n_refits)
