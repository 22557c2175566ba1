#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy reference backend.

Runs the three hot kernels (pruning scan, threshold seeding, centroid
accumulation) plus the two matmul backends on a synthetic workload shaped
like one core-loop batch, and reports timings side by side.

    python benchmarks/bench_kernels.py --n 4096 --k 1024 --d 1024
"""

import argparse
import time

import numpy as np

from superkmeans.distance import expand_to_sq_l2, matmul
from superkmeans.kernels import HAS_COMPILED, available_backends, get_kernels
from superkmeans.model import pdxify, tail_block_layout
from superkmeans.preprocess import compute_norms
from superkmeans.pruning import threshold_factors


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=4096, help="vectors per batch")
    ap.add_argument("--k", type=int, default=1024, help="centroids per bank")
    ap.add_argument("--d", type=int, default=1024, help="dimensionality")
    ap.add_argument("--d-prime", type=int, default=None, help="GEMM cutoff (default d/8)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n, k, d = args.n, args.k, args.d
    d_prime = args.d_prime or max(16, d // 8)
    rng = np.random.default_rng(args.seed)
    # clustered data so the scan sees realistic prune rates
    centers = (rng.standard_normal((max(4, k // 4), d)) * 3.0).astype(np.float32)
    x = (centers[rng.integers(0, len(centers), n)]
         + rng.standard_normal((n, d)).astype(np.float32))
    x = np.ascontiguousarray(x, dtype=np.float32)
    c = x[rng.choice(n, k, replace=False)].copy()
    prev = rng.integers(0, k, n).astype(np.int32)

    bank = pdxify(c, d_prime)
    block = expand_to_sq_l2(
        matmul(x, c, d_prime), compute_norms(x, d_prime), compute_norms(c, d_prime),
        partial=True,
    )
    dims, bounds = tail_block_layout(d, d_prime)
    factors = threshold_factors(d, d_prime, bounds, 2.1)

    print(f"batch: n={n} k={k} d={d} d'={d_prime} threads={args.threads} "
          f"(compiled available: {HAS_COMPILED})")
    header = f"{'kernel':<24}" + "".join(f"{b:>14}" for b in available_backends())
    print(header)
    print("-" * len(header))

    rows = []

    def bench(name, make_fn):
        timings = []
        for backend in available_backends():
            impl = get_kernels(backend)
            fn = make_fn(impl)
            timings.append(time_call(fn, args.repeats))
        rows.append((name, timings))

    def scan_fn(impl):
        def run():
            tau = np.empty(n, dtype=np.float32)
            impl.seed_thresholds(x, c, prev, tau, args.threads)
            assign = prev.copy()
            impl.scan_bank(block.values, x, bank.tail, bank.block_offsets,
                           bank.block_dims, factors, d_prime, 0, tau, assign,
                           False, args.threads)
        return run

    def seed_fn(impl):
        tau = np.empty(n, dtype=np.float32)
        return lambda: impl.seed_thresholds(x, c, prev, tau, args.threads)

    def update_fn(impl):
        def run():
            sums = np.zeros((k, d), dtype=np.float64)
            counts = np.zeros(k, dtype=np.int64)
            impl.accumulate_centroid_sums(x, prev, sums, counts)
        return run

    def portable_mm_fn(impl):
        out = np.empty((n, k), dtype=np.float32)
        return lambda: impl.portable_matmul(x, c, d_prime, out, args.threads)

    bench("pruning scan (1 bank)", scan_fn)
    bench("threshold seeding", seed_fn)
    bench("centroid accumulation", update_fn)
    bench(f"portable matmul d'={d_prime}", portable_mm_fn)

    for name, timings in rows:
        cells = "".join(f"{t * 1e3:>12.2f}ms" for t in timings)
        print(f"{name:<24}{cells}")

    t_blas = time_call(lambda: matmul(x, c, d_prime, backend="blas"), args.repeats)
    print(f"{'BLAS matmul d_prime':<24}{t_blas * 1e3:>12.2f}ms   (vendor library)")
    if HAS_COMPILED and len(rows[0][1]) == 2:
        speedup = rows[0][1][1] / rows[0][1][0]
        print(f"\npruning scan speedup (compiled vs python): {speedup:.1f}x")


if __name__ == "__main__":
    main()
