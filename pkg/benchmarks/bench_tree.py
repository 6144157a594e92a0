#!/usr/bin/env python3
"""Benchmark the tree-kernel backends: compiled extension vs numpy fallback.

The split-search kernel dominates forest fitting time, which in turn
dominates full experiment runs whenever the tree ensemble is the hypothesis
class.  This script times single-tree builds and a full forest fit on the
same data with both kernels and reports the speedup.

Usage:
    python benchmarks/bench_tree.py [--n 4000] [--d 50] [--trees 50]
"""

import argparse
import time

import numpy as np

from metarouter.regress import RegressorSpec, Tree, predict_tree
from metarouter.regress import _tree_py

try:
    from metarouter.regress import _tree_cy
except ImportError:
    _tree_cy = None


def time_kernel(kernel, X, y, w, max_depth, min_leaf, n_sub, repeats):
    times = []
    for i in range(repeats):
        t0 = time.perf_counter()
        kernel.build_tree(X, y, w, max_depth, min_leaf, n_sub, seed=1000 + i)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def time_forest(kernel, X, y, spec):
    # same bootstrap/seed schedule as fit_forest, with a pinned kernel
    import math

    n, d = X.shape
    n_sub = max(1, math.ceil(spec.feature_subsample * d))
    states = np.random.SeedSequence(spec.seed).generate_state(2 * spec.n_trees,
                                                              dtype=np.uint64)
    w = np.ones(n)
    t0 = time.perf_counter()
    trees = []
    for i in range(spec.n_trees):
        rng = np.random.default_rng(states[i])
        boot = rng.integers(0, n, size=n)
        trees.append(Tree(*kernel.build_tree(
            X[boot], y[boot], w[boot], spec.max_depth, spec.min_leaf, n_sub,
            int(states[spec.n_trees + i]))))
    fit_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    acc = np.zeros(n)
    for tree in trees:
        acc += predict_tree(tree, X)
    predict_time = time.perf_counter() - t0
    return fit_time, predict_time, acc / spec.n_trees


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--d", type=int, default=50)
    parser.add_argument("--trees", type=int, default=50)
    parser.add_argument("--max-depth", type=int, default=12)
    parser.add_argument("--min-leaf", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.standard_normal((args.n, args.d))
    y = X[:, 0] - 0.5 * X[:, 1] + 0.1 * rng.standard_normal(args.n)
    w = np.ones(args.n)
    n_sub = max(1, args.d // 3)

    print(f"data: n={args.n}, d={args.d}, subset={n_sub}, "
          f"depth={args.max_depth}, min_leaf={args.min_leaf}")

    py_tree = time_kernel(_tree_py, X, y, w, args.max_depth, args.min_leaf,
                          n_sub, args.repeats)
    print(f"single tree  python : {py_tree * 1000:8.1f} ms")
    if _tree_cy is None:
        print("single tree  cython : not built (pip install -e . with a C toolchain)")
    else:
        cy_tree = time_kernel(_tree_cy, X, y, w, args.max_depth, args.min_leaf,
                              n_sub, args.repeats)
        print(f"single tree  cython : {cy_tree * 1000:8.1f} ms   "
              f"(speedup {py_tree / cy_tree:4.1f}x)")

    spec = RegressorSpec.tree_ensemble(n_trees=args.trees, max_depth=args.max_depth,
                                       min_leaf=args.min_leaf, seed=args.seed)
    py_fit, py_pred, py_out = time_forest(_tree_py, X, y, spec)
    print(f"forest fit   python : {py_fit:8.2f} s   (predict {py_pred * 1000:.0f} ms)")
    if _tree_cy is not None:
        cy_fit, cy_pred, cy_out = time_forest(_tree_cy, X, y, spec)
        print(f"forest fit   cython : {cy_fit:8.2f} s   (predict {cy_pred * 1000:.0f} ms, "
              f"speedup {py_fit / cy_fit:4.1f}x)")
        agree = np.array_equal(py_out, cy_out)
        print(f"backend predictions identical: {agree}")


if __name__ == "__main__":
    main()
