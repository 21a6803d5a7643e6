"""Timing comparison of the two kernel backends.

Runs the pool-selection and mining kernels on training-shaped inputs
with both implementations, checks they agree exactly, and prints per-call
times. The numba backend is warmed once so JIT compilation stays out of
the measurements.

Usage: python3 benchmarks/bench_kernels.py [--calls N] [--seed S]
"""
import argparse
import time

import numpy as np

from instmine.kernels import (AGG_AVG, AGG_MAX, SEL_THRESHOLD, SEL_TOPK,
                              numpy_impl, resolve_backend)


def _unit_rows(rng, n, dim):
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def bench_topk(backends, rng, calls):
    feats = _unit_rows(rng, 2000, 32)
    sims = feats @ feats.T
    np.fill_diagonal(sims, -np.inf)
    results, times = {}, {}
    for name, impl in backends.items():
        impl.topk_select(sims[:4], 50)  # warm the JIT path
        start = time.perf_counter()
        for _ in range(calls):
            out = impl.topk_select(sims, 50)
        times[name] = (time.perf_counter() - start) / calls
        results[name] = out
    _check_equal(results, "topk_select")
    return "topk_select 2000x2000 p=50", times


def bench_mine(backends, rng, calls, aggregation, selection, label):
    feats = _unit_rows(rng, 50, 32)
    query0 = _unit_rows(rng, 1, 32)
    sims_q0 = feats @ query0.T
    gram = feats @ feats.T
    ids = np.arange(50, dtype=np.int64)
    args = (sims_q0, gram, ids, 5, aggregation, selection, 3, 0.6, -2.0,
            False)
    results, times = {}, {}
    for name, impl in backends.items():
        impl.mine_pool(*args)  # warm the JIT path
        start = time.perf_counter()
        for _ in range(calls):
            out = impl.mine_pool(*args)
        times[name] = (time.perf_counter() - start) / calls
        results[name] = out
    _check_equal(results, label)
    return f"mine_pool P=50 iters=5 {label}", times


def _check_equal(results, label):
    names = sorted(results)
    first = results[names[0]]
    for name in names[1:]:
        for a, b in zip(first, results[name]):
            if not np.array_equal(np.asarray(a), np.asarray(b)):
                raise SystemExit(f"{label}: backends disagree")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--calls", type=int, default=200,
                        help="timed calls per backend per workload")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = {"numpy": numpy_impl}
    try:
        backends["numba"] = resolve_backend("numba")
    except ValueError:
        print("numba backend unavailable; timing numpy only")

    rng = np.random.default_rng(args.seed)
    rows = [bench_topk(backends, rng, max(1, args.calls // 10))]
    rows.append(bench_mine(backends, rng, args.calls, AGG_AVG, SEL_TOPK,
                           "avg/topk"))
    rows.append(bench_mine(backends, rng, args.calls, AGG_MAX, SEL_THRESHOLD,
                           "max/threshold"))

    width = max(len(r[0]) for r in rows)
    names = sorted(backends)
    header = f"{'workload':<{width}}  " + "  ".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += "  " + f"{'speedup':>8}"
    print(header)
    for label, times in rows:
        line = f"{label:<{width}}  " + "  ".join(
            f"{times[n] * 1e6:>10.1f}us" for n in names)
        if len(names) == 2:
            line += f"  {times['numpy'] / times['numba']:>7.1f}x"
        print(line)
    print("\nbackends agree exactly on every workload")


if __name__ == "__main__":
    main()
