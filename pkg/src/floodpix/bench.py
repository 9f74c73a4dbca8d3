"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run with ``python -m floodpix.bench``. Each hot kernel executes on
realistic desk-scale inputs via both paths; results are checked for exact
agreement and timed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .accel import NUMBA_AVAILABLE
from .classifiers import fit_sgd
from .gbdt.binning import bin_features
from .gbdt.boosting import GBDTParams, fit_gbdt, logistic_grad_hess
from .gbdt.kernels import build_histograms, scan_best_split, tree_outputs_raw
from .gbdt.tree import grow_tree_leafwise
from .speckle import lee_sigma_filter


def _time(fn, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def run_benchmarks(n_rows: int, repeats: int) -> list[dict]:
    rng = np.random.default_rng(0)
    d = 9
    values = rng.normal(size=(n_rows, d)).astype(np.float32)
    labels = (values[:, 0] + 0.3 * rng.normal(size=n_rows) > 0).astype(np.uint8)
    bins = bin_features(values)
    margins = rng.normal(scale=0.5, size=n_rows)
    grad, hess = logistic_grad_hess(margins, labels.astype(np.float64))
    rows = np.arange(n_rows, dtype=np.int64)
    tree = grow_tree_leafwise(rows, grad, hess, bins, max_leaves=32, lam=1.0)
    sar = rng.normal(loc=-15.0, scale=2.0, size=(512, 512)).astype(np.float32)

    cases = [
        (
            "histograms",
            lambda un: build_histograms(bins.codes, rows, grad, hess, bins.max_bins, use_numba=un),
        ),
        (
            "split_scan",
            lambda un: scan_best_split(
                *build_histograms(bins.codes, rows, grad, hess, bins.max_bins, use_numba=un),
                bins.n_bins,
                1.0,
                use_numba=un,
            ),
        ),
        ("tree_predict", lambda un: tree_outputs_raw(tree, values, use_numba=un)),
        ("lee_sigma_512", lambda un: lee_sigma_filter(sar, use_numba=un)),
        (
            "sgd_fit",
            lambda un: fit_sgd(values[:65536], labels[:65536], loss="logistic", seed=0, use_numba=un).weights,
        ),
        (
            "gbdt_fit_20_trees",
            lambda un: fit_gbdt(
                values, labels, GBDTParams(n_trees=20, max_leaves=32), seed=0, use_numba=un
            ).train_losses[-1],
        ),
    ]

    results = []
    for name, fn in cases:
        fn(True)  # warm the JIT cache before timing
        t_numba, out_numba = _time(lambda: fn(True), repeats)
        t_numpy, out_numpy = _time(lambda: fn(False), repeats)
        matches = _same(out_numba, out_numpy)
        results.append(
            {
                "kernel": name,
                "numba_s": t_numba,
                "numpy_s": t_numpy,
                "speedup": t_numpy / t_numba if t_numba > 0 else float("inf"),
                "identical": matches,
            }
        )
    return results


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return bool(np.array_equal(a, b))
    return a == b


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=1 << 18, help="feature rows for the GBDT kernels")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")
    results = run_benchmarks(args.rows, args.repeats)
    print(f"{'kernel':<20} {'numba':>10} {'numpy':>10} {'speedup':>9}  identical")
    for row in results:
        print(
            f"{row['kernel']:<20} {row['numba_s'] * 1e3:>8.2f}ms {row['numpy_s'] * 1e3:>8.2f}ms"
            f" {row['speedup']:>8.1f}x  {row['identical']}"
        )


if __name__ == "__main__":
    main()
