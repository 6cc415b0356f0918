"""Stagewise gradient-boosted trees for the additive log-odds model.

Each round fits a small regression tree to the negative gradient of the
loss (split criterion: variance reduction of the gradient targets), with
leaf values from a damped Newton step -sum(g)/(sum(h) + ridge) scaled by
the shrinkage eta. The model's log-odds is the base score plus the sum
of tree contributions; the probability is the logistic of that score.

``max_depth`` counts tree levels: 2 means a stump (one split). Losses:
"logistic" (binomial deviance, the default) and "exponential"
(exp(-margin), the classical reweighting loss); their fitted scores are
rank-equivalent on well-behaved data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, metrics
from .cart import DecisionTree, as_float_matrix

# ridge term damping leaf Newton steps, for numerical stability
LAMBDA_REG = 1.0

_LOSSES = ("logistic", "exponential")


@dataclass(frozen=True)
class BoostParams:
    n_rounds: int = 100
    eta: float = 0.01
    max_depth: int = 5  # levels; 2 = stump
    subsample: float = 0.5
    loss: str = "logistic"
    min_child_weight: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.max_depth < 2:
            raise ValueError("max_depth counts levels; a stump is 2")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")
        if self.loss not in _LOSSES:
            raise ValueError(f"loss must be one of {_LOSSES}")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def loss_values(kind: str, y, score) -> np.ndarray:
    """Per-observation loss at the given log-odds scores."""
    y = np.asarray(y, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    s = 2.0 * y - 1.0
    if kind == "logistic":
        return np.logaddexp(0.0, -s * score)
    if kind == "exponential":
        return np.exp(-s * np.clip(score, -60, 60))
    raise ValueError(f"unknown loss {kind!r}")


def loss_gradient_hessian(kind: str, y, score):
    """First and second derivatives of the per-observation loss wrt the score."""
    y = np.asarray(y, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    if kind == "logistic":
        p = sigmoid(score)
        return p - y, p * (1.0 - p)
    if kind == "exponential":
        s = 2.0 * y - 1.0
        e = np.exp(-s * np.clip(score, -60, 60))
        return -s * e, e
    raise ValueError(f"unknown loss {kind!r}")


@dataclass
class RoundLog:
    round: int
    train_loss: float
    eval_auc: float = float("nan")


@dataclass
class BoostedModel:
    params: BoostParams
    base_score: float
    trees: list[DecisionTree]
    importance: np.ndarray
    round_log: list[RoundLog]
    n_features_in: int
    columns: list[str] | None = None

    def decision_function(self, X) -> np.ndarray:
        """Log-odds: base score plus the sum of traversed leaf values."""
        X = as_float_matrix(X)
        if X.shape[1] != self.n_features_in:
            raise ValueError(
                f"column mismatch: model expects {self.n_features_in}, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "boost",
            "params": {
                "n_rounds": self.params.n_rounds,
                "eta": self.params.eta,
                "max_depth": self.params.max_depth,
                "subsample": self.params.subsample,
                "loss": self.params.loss,
                "min_child_weight": self.params.min_child_weight,
                "seed": self.params.seed,
            },
            "base_score": self.base_score,
            "n_features": self.n_features_in,
            "columns": self.columns,
            "importance": [float(v) for v in self.importance],
            "round_log": [
                {"round": r.round, "train_loss": r.train_loss,
                 "eval_auc": None if np.isnan(r.eval_auc) else r.eval_auc}
                for r in self.round_log
            ],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BoostedModel":
        if payload.get("kind") != "boost":
            raise ValueError("not a boosting payload")
        return cls(
            params=BoostParams(**payload["params"]),
            base_score=float(payload["base_score"]),
            trees=[DecisionTree.from_dict(t) for t in payload["trees"]],
            importance=np.array(payload["importance"], dtype=np.float64),
            round_log=[
                RoundLog(d["round"], d["train_loss"],
                         float("nan") if d["eval_auc"] is None else d["eval_auc"])
                for d in payload["round_log"]
            ],
            n_features_in=int(payload["n_features"]),
            columns=payload.get("columns"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BoostedModel":
        return cls.from_dict(json.loads(text))


class _RegBuilder:
    """Regression tree on gradient targets z with hessians h (global row ids)."""

    def __init__(self, X, z, h, max_splits, min_child_weight, eta):
        self.X = X
        self.z = z
        self.h = h
        self.max_splits = max_splits
        self.min_child_weight = min_child_weight
        self.eta = eta
        self.cand = np.arange(X.shape[1], dtype=np.int64)
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.missing_left = []
        self.value = []
        self.n_samples = []
        self.weight = []
        self.gain = []

    def _new_node(self, rows):
        zsum = float(self.z[rows].sum())
        hsum = float(self.h[rows].sum())
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.missing_left.append(True)
        self.value.append(self.eta * zsum / (hsum + LAMBDA_REG))
        self.n_samples.append(rows.shape[0])
        self.weight.append(hsum)
        self.gain.append(0.0)
        return idx

    def grow(self, rows, depth) -> int:
        idx = self._new_node(rows)
        if depth >= self.max_splits or rows.shape[0] < 2:
            return idx
        found, col, thr, gain, mleft = _kernels.best_split_regression(
            self.X, self.z, self.h, rows, self.cand, 1, self.min_child_weight
        )
        if not found:
            return idx
        v = self.X[rows, col]
        go_left = np.where(np.isnan(v), mleft, v < thr)
        self.feature[idx] = int(col)
        self.threshold[idx] = float(thr)
        self.missing_left[idx] = bool(mleft)
        self.gain[idx] = float(gain)
        self.left[idx] = self.grow(rows[go_left], depth + 1)
        self.right[idx] = self.grow(rows[~go_left], depth + 1)
        return idx

    def finish(self) -> DecisionTree:
        return DecisionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            missing_left=np.array(self.missing_left, dtype=np.bool_),
            value=np.array(self.value, dtype=np.float64),
            n_samples=np.array(self.n_samples, dtype=np.int64),
            weight=np.array(self.weight, dtype=np.float64),
            gain=np.array(self.gain, dtype=np.float64),
            n_features_in=self.X.shape[1],
        )


def fit_boost(
    X,
    y,
    params: BoostParams | None = None,
    *,
    columns=None,
    eval_set=None,
    eval_rounds=None,
) -> BoostedModel:
    """Stagewise fit; deterministic given the seed.

    ``eval_set=(X_val, y_val)`` tracks validation AUC after the rounds
    listed in ``eval_rounds`` (all rounds when omitted); cross-validation
    of the round count rides on this hook.
    """
    params = params or BoostParams()
    params.validate()
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise ValueError("y is constant; boosting undefined")
    if not np.isin(classes, [0, 1]).all():
        raise ValueError("labels must be 0/1")

    n, p = X.shape
    rng = np.random.default_rng(params.seed)
    pbar = float(y.mean())
    base = float(np.log(pbar / (1.0 - pbar)))
    F = np.full(n, base)
    if eval_set is not None:
        X_val = as_float_matrix(eval_set[0])
        y_val = np.asarray(eval_set[1], dtype=np.float64)
        F_val = np.full(X_val.shape[0], base)
        checkpoints = set(eval_rounds) if eval_rounds is not None else None

    trees: list[DecisionTree] = []
    importance = np.zeros(p)
    log: list[RoundLog] = []
    k_sub = max(int(np.floor(params.subsample * n)), 1)
    z = np.zeros(n)
    h = np.zeros(n)
    for m in range(params.n_rounds):
        if params.subsample < 1.0:
            rows = np.sort(rng.permutation(n)[:k_sub])
        else:
            rows = np.arange(n, dtype=np.int64)
        g_r, h_r = loss_gradient_hessian(params.loss, y[rows], F[rows])
        z[rows] = -g_r
        h[rows] = h_r
        builder = _RegBuilder(
            X, z, h, params.max_depth - 1, params.min_child_weight, params.eta
        )
        builder.grow(rows, 0)
        tree = builder.finish()
        trees.append(tree)
        internal = tree.feature >= 0
        np.add.at(importance, tree.feature[internal], tree.gain[internal])
        F += tree.predict(X)
        entry = RoundLog(m + 1, float(loss_values(params.loss, y, F).mean()))
        if eval_set is not None:
            F_val += tree.predict(X_val)
            if checkpoints is None or (m + 1) in checkpoints:
                entry.eval_auc = metrics.auc(sigmoid(F_val), y_val)
        log.append(entry)

    cols = list(columns) if columns is not None else None
    return BoostedModel(params, base, trees, importance, log, p, cols)


def predict_boost(model: BoostedModel, X) -> np.ndarray:
    """logistic(base + sum of tree contributions)."""
    return model.predict(X)


def boost_importance(model: BoostedModel) -> np.ndarray:
    """Split-criterion improvement accumulated per column over all rounds."""
    return model.importance.copy()


@dataclass
class CvRoundsResult:
    best_rounds: int
    grid: list[int]
    mean_auc: np.ndarray
    fold_auc: np.ndarray  # [k_folds, len(grid)]


def cv_rounds(X, y, params: BoostParams, k_folds: int, grid) -> CvRoundsResult:
    """Round count maximizing mean validation AUC over stratified folds."""
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    grid = sorted(set(int(g) for g in grid))
    if not grid or grid[0] < 1:
        raise ValueError("grid must contain positive round counts")
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    fold = metrics.stratified_folds(y, k_folds, params.seed)
    fold_auc = np.full((k_folds, len(grid)), np.nan)
    for f in range(k_folds):
        va = fold == f
        tr = ~va
        if np.unique(y[tr]).shape[0] < 2 or np.unique(y[va]).shape[0] < 2:
            raise ValueError(f"fold {f} has a single class")
        model = fit_boost(
            X[tr],
            y[tr],
            replace(params, n_rounds=grid[-1]),
            eval_set=(X[va], y[va]),
            eval_rounds=grid,
        )
        curve = {r.round: r.eval_auc for r in model.round_log if not np.isnan(r.eval_auc)}
        fold_auc[f] = [curve[g] for g in grid]
    mean_auc = fold_auc.mean(axis=0)
    best = grid[int(np.argmax(mean_auc))]
    return CvRoundsResult(best, grid, mean_auc, fold_auc)
