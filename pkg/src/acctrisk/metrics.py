"""Discrimination metrics: ROC/AUC, confusion matrices, cross-validation.

AUC is computed rank-based (Mann-Whitney with ties counted one half),
which equals the trapezoidal area under the ROC curve built by grouping
tied scores into single steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def midranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values assigned the average of their ranks."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    xs = x[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _check_scores_labels(scores, y):
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    if scores.shape[0] != y.shape[0]:
        raise ValueError("scores and labels differ in length")
    if scores.shape[0] == 0:
        raise ValueError("empty input")
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN; filter before calling")
    uy = np.unique(y)
    if not np.isin(uy, [0, 1]).all():
        raise ValueError("labels must be 0/1")
    if uy.shape[0] < 2:
        raise ValueError("both classes must be present")
    return scores, y.astype(np.int64)


def auc(scores, y) -> float:
    """Probability a random positive outscores a random negative (ties half)."""
    scores, y = _check_scores_labels(scores, y)
    r = midranks(scores)
    n1 = int(y.sum())
    n0 = y.shape[0] - n1
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def roc_points(scores, y) -> np.ndarray:
    """ROC as (fpr, tpr) rows from (0,0) to (1,1), tied scores grouped."""
    scores, y = _check_scores_labels(scores, y)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    yy = y[order]
    n1 = int(yy.sum())
    n0 = yy.shape[0] - n1
    pts = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = yy.shape[0]
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        block = yy[i : j + 1]
        tp += int(block.sum())
        fp += block.shape[0] - int(block.sum())
        pts.append((fp / n0, tp / n1))
        i = j + 1
    return np.array(pts, dtype=np.float64)


def trapezoid_area(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


@dataclass
class ConfusionResult:
    threshold: float
    tn: int
    fp: int
    fn: int
    tp: int
    class0_error: float
    class1_error: float
    global_error: float

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "tp": self.tp,
            "class0_error": self.class0_error,
            "class1_error": self.class1_error,
            "global_error": self.global_error,
        }


def confusion(scores, y, threshold: float = 0.5) -> ConfusionResult:
    """Confusion counts and per-class error rates at ``score >= threshold``."""
    scores, y = _check_scores_labels(scores, y)
    pred = (scores >= threshold).astype(np.int64)
    tp = int(((pred == 1) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    n0 = tn + fp
    n1 = tp + fn
    return ConfusionResult(
        threshold=float(threshold),
        tn=tn,
        fp=fp,
        fn=fn,
        tp=tp,
        class0_error=fp / n0,
        class1_error=fn / n1,
        global_error=(fp + fn) / (n0 + n1),
    )


@dataclass
class EvalReport:
    auc: float
    roc: np.ndarray
    confusion: ConfusionResult

    def to_dict(self) -> dict:
        return {"auc": self.auc, "confusion": self.confusion.to_dict()}


def evaluate_scores(scores, y, threshold: float = 0.5) -> EvalReport:
    return EvalReport(
        auc=auc(scores, y),
        roc=roc_points(scores, y),
        confusion=confusion(scores, y, threshold),
    )


def single_variable_auc(x, y) -> float:
    """Orientation-free discrimination of one column; NaN rows dropped."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    keep = ~np.isnan(x)
    if not keep.any():
        raise ValueError("column is entirely missing")
    a = auc(x[keep], y[keep])
    return max(a, 1.0 - a)


def stratified_folds(y, k_folds: int, seed: int) -> np.ndarray:
    """Fold id per row; classes shuffled then dealt round-robin.

    The deal continues across classes (a running fold offset), so fold
    sizes stay within one row of each other; k_folds = n degenerates to
    leave-one-out.
    """
    y = np.asarray(y)
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(idx.shape[0])]
        fold[idx] = (offset + np.arange(idx.shape[0])) % k_folds
        offset = (offset + idx.shape[0]) % k_folds
    return fold


@dataclass
class FoldResult:
    fold: int
    auc: float  # NaN when skipped
    note: str = ""


@dataclass
class CvResult:
    folds: list[FoldResult] = field(default_factory=list)
    mean_auc: float = float("nan")


def cross_validate(fit_predict, X, y, k_folds: int, seed: int) -> CvResult:
    """Stratified k-fold AUC of ``fit_predict(X_tr, y_tr, X_va) -> scores``.

    Folds whose validation part has a single class (AUC undefined) are
    reported as skipped rather than failing the run.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    fold = stratified_folds(y, k_folds, seed)
    out = CvResult()
    vals = []
    for f in range(k_folds):
        va = fold == f
        tr = ~va
        if not va.any() or not tr.any():
            out.folds.append(FoldResult(f, float("nan"), "empty fold"))
            continue
        if np.unique(y[tr]).shape[0] < 2:
            raise ValueError(f"training part of fold {f} has a single class")
        if np.unique(y[va]).shape[0] < 2:
            out.folds.append(FoldResult(f, float("nan"), "single-class validation fold"))
            continue
        scores = np.asarray(fit_predict(X[tr], y[tr], X[va]), dtype=np.float64)
        keep = ~np.isnan(scores)
        yva = y[va][keep]
        if np.unique(yva).shape[0] < 2:
            out.folds.append(FoldResult(f, float("nan"), "degenerate after NaN filtering"))
            continue
        out.folds.append(FoldResult(f, auc(scores[keep], yva)))
        vals.append(out.folds[-1].auc)
    out.mean_auc = float(np.mean(vals)) if vals else float("nan")
    return out
