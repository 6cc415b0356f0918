"""Benchmark the numba and pure-numpy kernel backends against each other.

The backend is fixed at import time by ACCTRISK_DISABLE_NUMBA, so this
driver re-invokes itself in a subprocess per backend and prints a
comparison table. Workloads: raw split scans, a forest fit, and a
boosting fit at configurable sizes.

    python benchmarks/bench_split_kernels.py --rows 8000 --cols 30
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("class_split", "reg_split", "traverse", "forest_fit", "boost_fit")


def run_workloads(rows: int, cols: int, repeats: int) -> dict:
    import numpy as np

    from acctrisk import _kernels
    from acctrisk.boost import BoostParams, fit_boost
    from acctrisk.ensemble import ForestParams, fit_forest

    rng = np.random.default_rng(0)
    X = rng.normal(size=(rows, cols))
    X[rng.random((rows, cols)) < 0.05] = np.nan
    X = np.ascontiguousarray(X)
    signal = np.where(np.isnan(X[:, 0]), 0.0, X[:, 0])
    y = (rng.random(rows) < 1.0 / (1.0 + np.exp(-(signal - 1.5)))).astype(np.float64)
    w = np.ones(rows)
    z = rng.normal(size=rows)
    h = np.full(rows, 0.25)
    all_rows = np.arange(rows, dtype=np.int64)
    cand = np.arange(cols, dtype=np.int64)

    def timeit(fn, n=repeats):
        fn()  # warm-up (numba compilation)
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        return (time.perf_counter() - t0) / n

    timings = {"backend": _kernels.backend_name()}
    timings["class_split"] = timeit(
        lambda: _kernels.best_split_classification(X, y, w, all_rows, cand, 1)
    )
    timings["reg_split"] = timeit(
        lambda: _kernels.best_split_regression(X, z, h, all_rows, cand, 1, 0.0)
    )

    forest_params = ForestParams(n_trees=10, sampling="balanced", seed=1)
    timings["forest_fit"] = timeit(lambda: fit_forest(X, y, forest_params), n=max(1, repeats // 3))

    boost_params = BoostParams(n_rounds=30, eta=0.1, max_depth=4, subsample=0.5, seed=1)
    model = fit_boost(X, y, boost_params)
    timings["boost_fit"] = timeit(lambda: fit_boost(X, y, boost_params), n=max(1, repeats // 3))
    tree = model.trees[0]
    timings["traverse"] = timeit(
        lambda: _kernels.traverse_tree(
            tree.feature, tree.threshold, tree.missing_left, tree.left, tree.right, tree.value, X
        )
    )
    return timings


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=8000)
    parser.add_argument("--cols", type=int, default=30)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(run_workloads(args.rows, args.cols, args.repeats)))
        return 0

    results = {}
    for disable, label in ((0, "numba"), (1, "numpy")):
        env = dict(os.environ, ACCTRISK_DISABLE_NUMBA=str(disable))
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker",
             "--rows", str(args.rows), "--cols", str(args.cols), "--repeats", str(args.repeats)],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        if payload["backend"] != label:
            print(f"warning: requested {label} backend but got {payload['backend']}", file=sys.stderr)
        results[label] = payload

    print(f"rows={args.rows} cols={args.cols} (mean seconds per call)")
    print(f"{'workload':<14} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name in WORKLOADS:
        tn = results["numba"].get(name)
        tp = results["numpy"].get(name)
        if tn is None or tp is None:
            continue
        print(f"{name:<14} {tn:>12.6f} {tp:>12.6f} {tp / tn:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
