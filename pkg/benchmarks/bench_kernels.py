#!/usr/bin/env python
"""
Compare the numba tree kernels against the pure-numpy fallback.

Times forest growth and forest prediction on the same inputs for each
backend and checks that both produce identical forests.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 500 2000 8000 --trees 20
    python benchmarks/bench_kernels.py --output bench.json
"""

import argparse
import json
import time

import numpy as np

from refine._backend import HAVE_NUMBA, NUMBA_DISABLED
from refine.nonlinear_learner import ForestConfig, fit_forest


def best_of(fn, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def make_data(n, p, d, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    Y = np.tanh(2 * X[:, :d]) + 0.5 * rng.standard_normal((n, d))
    return X, Y


def run(sizes, p, d, trees, repeats):
    backends = ["numpy"]
    if HAVE_NUMBA and not NUMBA_DISABLED:
        backends.insert(0, "numba")
        # compile outside the timed region
        X, Y = make_data(50, p, d)
        fit_forest(X, Y, ForestConfig(n_trees=1), backend="numba").predict(X, backend="numba")
    else:
        print("numba unavailable or disabled; timing the numpy path only")

    cfg = ForestConfig(n_trees=trees)
    rows = []
    for n in sizes:
        X, Y = make_data(n, p, d)
        forests = {}
        for b in backends:
            fit_s, forest = best_of(lambda: fit_forest(X, Y, cfg, seed=1, backend=b), repeats)
            pred_s, pred = best_of(lambda: forest.predict(X, backend=b), repeats)
            forests[b] = (forest, pred)
            rows.append({"backend": b, "n": n, "fit_seconds": fit_s, "predict_seconds": pred_s})
            print(f"{b:>6}  n={n:>6}  fit {fit_s:8.3f}s  predict {pred_s:8.4f}s")
        if len(forests) == 2:
            (fa, pa), (fb, pb) = forests["numba"], forests["numpy"]
            same = np.array_equal(fa.threshold, fb.threshold) and np.array_equal(pa, pb)
            speed = rows[-1]["fit_seconds"] / rows[-2]["fit_seconds"]
            print(f"        identical={same}  numba fit speedup x{speed:.1f}")
            if not same:
                raise SystemExit("backends disagree")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 2000, 8000])
    ap.add_argument("--features", type=int, default=12)
    ap.add_argument("--targets", type=int, default=10)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--output", help="write timings as JSON")
    args = ap.parse_args()
    rows = run(args.sizes, args.features, args.targets, args.trees, args.repeats)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
