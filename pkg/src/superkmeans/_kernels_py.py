"""NumPy reference kernels, bit-identical to the compiled ones.

Vectorized over vectors for a fixed centroid, which preserves the scan's
per-vector semantics exactly: tau tightening happens between centroids, never
within one. In-block sums use float32 cumsum, which accumulates sequentially
in ascending dimension order like the C loops.
"""

from __future__ import annotations

import numpy as np

_INF32 = np.float32(np.inf)


def scan_bank(partial_dists, x, tail, block_offsets, block_dims, theta_factors,
              d_prime, bank_offset, tau, assign, sentinel, n_threads):
    n, kb = partial_dists.shape
    n_blocks = len(block_dims)
    survivors = 0
    dims_touched = 0
    for j in range(kb):
        gate = _INF32 if sentinel else tau * theta_factors[0]
        idx = np.nonzero(~(partial_dists[:, j] > gate))[0]
        survivors += idx.size
        if idx.size == 0:
            continue
        running = partial_dists[idx, j].copy()
        xs = x[idx]
        pos = d_prime
        for b in range(n_blocks):
            bd = int(block_dims[b])
            off = int(block_offsets[b])
            col = tail[off : off + bd * kb].reshape(bd, kb)[:, j]
            diff = xs[:, pos : pos + bd] - col[np.newaxis, :]
            block_sums = np.cumsum(diff * diff, axis=1, dtype=np.float32)[:, -1]
            dims_touched += idx.size * bd
            running = running + block_sums
            pos += bd
            if sentinel and b < n_blocks - 1:
                gate = _INF32
            else:
                gate = tau[idx] * theta_factors[b + 1]
            keep = ~(running > gate)
            if not keep.all():
                idx = idx[keep]
                running = running[keep]
                xs = xs[keep]
                if idx.size == 0:
                    break
        if idx.size == 0:
            continue
        gid = bank_offset + j
        cur_tau = tau[idx]
        improved = running < cur_tau
        tied = (running == cur_tau) & (gid < assign[idx])
        take = improved | tied
        if np.any(take):
            assign[idx[take]] = gid
            tau[idx[improved]] = running[improved]
    return survivors, dims_touched


def seed_thresholds(x, centroids, assign, out, n_threads, _chunk=1024):
    n = x.shape[0]
    for s in range(0, n, _chunk):
        e = min(n, s + _chunk)
        diff = x[s:e] - centroids[assign[s:e]]
        out[s:e] = np.cumsum(diff * diff, axis=1, dtype=np.float32)[:, -1]


def accumulate_centroid_sums(x, assign, sums, counts):
    # add.at processes rows in order, matching the compiled serial loop.
    np.add.at(sums, assign, x.astype(np.float64, copy=False))
    counts += np.bincount(assign, minlength=counts.shape[0]).astype(np.int64)


def portable_matmul(a, b, dims, out, n_threads, _chunk=64):
    """Inner products over the leading dims, accumulated in float32 chunks.

    Deterministic run-to-run for a fixed thread count; not bit-identical to
    the compiled version (different but fixed accumulation grouping).
    """
    out[:] = 0.0
    for s in range(0, dims, _chunk):
        e = min(dims, s + _chunk)
        out += a[:, s:e] @ b[:, s:e].T
