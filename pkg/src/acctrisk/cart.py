"""Greedy binary classification trees with Gini impurity.

The base learner for both ensembles. Missing values (NaN) follow a
per-node direction learned during the split search (routed to whichever
side improves impurity more). Thresholds sit at midpoints of consecutive
distinct sorted values; ties break toward the lowest column index, then
the lowest threshold. A fitted tree is the usual piecewise-constant
function: each leaf holds the weighted class-1 probability of its region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 64  # number of splits along a path
    min_node_size: int = 1
    mtry: int = 0  # candidate columns per split; 0 = all
    seed: int = 0

    def validate(self, n_features: int):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.mtry < 0 or self.mtry > n_features:
            raise ValueError("mtry must lie in 0..n_features")


@dataclass
class DecisionTree:
    """Flat-array tree; node 0 is the root, feature == -1 marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    weight: np.ndarray
    gain: np.ndarray
    n_features_in: int

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def predict(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        if X.shape[1] != self.n_features_in:
            raise ValueError(
                f"column mismatch: tree expects {self.n_features_in}, got {X.shape[1]}"
            )
        return _kernels.traverse_tree(
            self.feature, self.threshold, self.missing_left, self.left, self.right, self.value, X
        )

    def predict_row(self, row) -> float:
        return float(self.predict(np.asarray(row, dtype=np.float64).reshape(1, -1))[0])

    def decision_path(self, row) -> list[int]:
        row = np.asarray(row, dtype=np.float64)
        node = 0
        path = [0]
        while self.feature[node] >= 0:
            v = row[self.feature[node]]
            if np.isnan(v):
                node = self.left[node] if self.missing_left[node] else self.right[node]
            elif v < self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
            path.append(int(node))
        return path

    # -- persistence (schema_version 1: list of node objects) --------------

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            nodes.append(
                {
                    "feature": int(self.feature[i]),
                    "threshold": None if np.isnan(self.threshold[i]) else float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "missing_left": bool(self.missing_left[i]),
                    "value": float(self.value[i]),
                    "n_samples": int(self.n_samples[i]),
                    "weight": float(self.weight[i]),
                    "gain": float(self.gain[i]),
                }
            )
        return {"schema_version": 1, "kind": "tree", "n_features": self.n_features_in, "nodes": nodes}

    @classmethod
    def from_dict(cls, payload: dict) -> "DecisionTree":
        if payload.get("schema_version") != 1:
            raise ValueError("unsupported tree schema version")
        nodes = payload["nodes"]
        n = len(nodes)
        tree = cls(
            feature=np.array([d["feature"] for d in nodes], dtype=np.int64),
            threshold=np.array(
                [np.nan if d["threshold"] is None else d["threshold"] for d in nodes],
                dtype=np.float64,
            ),
            left=np.array([d["left"] for d in nodes], dtype=np.int64),
            right=np.array([d["right"] for d in nodes], dtype=np.int64),
            missing_left=np.array([d["missing_left"] for d in nodes], dtype=np.bool_),
            value=np.array([d["value"] for d in nodes], dtype=np.float64),
            n_samples=np.array([d["n_samples"] for d in nodes], dtype=np.int64),
            weight=np.array([d["weight"] for d in nodes], dtype=np.float64),
            gain=np.array([d["gain"] for d in nodes], dtype=np.float64),
            n_features_in=int(payload["n_features"]),
        )
        assert tree.feature.shape[0] == n
        return tree

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


def as_float_matrix(X) -> np.ndarray:
    if hasattr(X, "to_dense"):  # FeatureMatrix
        X = X.to_dense()
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    return X


def gini_impurity(n0: float, n1: float) -> float:
    """2 p (1 - p) for a binary node with counts (n0, n1)."""
    if n0 < 0 or n1 < 0 or n0 + n1 <= 0:
        raise ValueError("node counts must be non-negative with a positive total")
    p = n1 / (n0 + n1)
    return 2.0 * p * (1.0 - p)


def best_split(X, y, weights=None, candidates=None, min_node_size: int = 1):
    """Best (column, threshold) by weighted Gini decrease, or None.

    The decrease is the parent impurity minus the weight-proportional sum
    of child impurities. Rows with NaN in the tried column are routed to
    the side that yields the larger decrease ("missing_left" reports it).
    """
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    rows = np.arange(X.shape[0], dtype=np.int64)
    if candidates is None:
        cand = np.arange(X.shape[1], dtype=np.int64)
    else:
        cand = np.sort(np.asarray(candidates, dtype=np.int64))
    found, col, thr, gain, mleft = _kernels.best_split_classification(
        X, y, w, rows, cand, min_node_size
    )
    if not found:
        return None
    return {"column": int(col), "threshold": float(thr), "gain": float(gain), "missing_left": bool(mleft)}


class _Builder:
    def __init__(self, X, y, w, params: TreeParams, rng):
        self.X = X
        self.y = y
        self.w = w
        self.params = params
        self.rng = rng
        self.p = X.shape[1]
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
        wsum = float(self.w[rows].sum())
        wy = float((self.w[rows] * self.y[rows]).sum())
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.missing_left.append(True)
        self.value.append(wy / wsum if wsum > 0 else 0.0)
        self.n_samples.append(rows.shape[0])
        self.weight.append(wsum)
        self.gain.append(0.0)
        return idx

    def _candidates(self):
        mtry = self.params.mtry
        if mtry == 0 or mtry >= self.p:
            return np.arange(self.p, dtype=np.int64)
        return np.sort(self.rng.choice(self.p, size=mtry, replace=False)).astype(np.int64)

    def grow(self, rows, depth) -> int:
        idx = self._new_node(rows)
        params = self.params
        wsum = self.weight[idx]
        wy = wsum * self.value[idx]
        pure = wy <= 0.0 or wy >= wsum
        if depth >= params.max_depth or pure or rows.shape[0] < 2 * params.min_node_size:
            return idx
        cand = self._candidates()
        found, col, thr, gain, mleft = _kernels.best_split_classification(
            self.X, self.y, self.w, rows, cand, params.min_node_size
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
            n_features_in=self.p,
        )


def fit_tree(X, y, weights=None, params: TreeParams | None = None, rng=None) -> DecisionTree:
    """Recursive greedy growth honoring max_depth / min_node_size / mtry.

    ``rng`` overrides the params seed so callers (forests) can keep one
    generator per tree; candidate columns are re-drawn at every node when
    mtry > 0.
    """
    params = params or TreeParams()
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty input")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if weights is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be >= 0 with a positive sum")
    params.validate(X.shape[1])
    if rng is None:
        rng = np.random.default_rng(params.seed)
    builder = _Builder(X, y, w, params, rng)
    builder.grow(np.arange(X.shape[0], dtype=np.int64), 0)
    return builder.finish()


def predict_tree(tree: DecisionTree, row) -> float:
    """Leaf class-1 probability for one row (NaN follows the learned direction)."""
    return tree.predict_row(row)


def tree_importance(tree: DecisionTree, n_features: int | None = None) -> np.ndarray:
    """Per-column sum of weight-scaled impurity decreases."""
    p = tree.n_features_in if n_features is None else n_features
    imp = np.zeros(p)
    internal = tree.feature >= 0
    np.add.at(imp, tree.feature[internal], tree.weight[internal] * tree.gain[internal])
    return imp
