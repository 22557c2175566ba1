# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot kernels: progressive pruning scan, threshold seeding,
centroid-sum accumulation, and the portable blocked matmul.

Float semantics are pinned (float32, in-block accumulation in ascending
dimension order, no FMA contraction) so results are bit-identical to the
NumPy reference in _kernels_py.
"""

from cython.parallel cimport prange
from libc.math cimport INFINITY


def scan_bank(const float[:, ::1] partial_dists,
              const float[:, ::1] x,
              const float[::1] tail,
              const long long[::1] block_offsets,
              const int[::1] block_dims,
              const float[::1] theta_factors,
              int d_prime,
              int bank_offset,
              float[::1] tau,
              int[::1] assign,
              bint sentinel,
              int n_threads):
    """Scan one centroid bank for a batch of vectors, tightening tau in place.

    partial_dists holds squared distances over the leading d_prime dims.
    Returns (survivors_after_gemm_total, tail_dims_touched_total).
    """
    cdef Py_ssize_t n = partial_dists.shape[0]
    cdef Py_ssize_t kb = partial_dists.shape[1]
    cdef Py_ssize_t n_blocks = block_dims.shape[0]
    cdef long long survivors = 0
    cdef long long dims_touched = 0
    cdef Py_ssize_t i, j, b, t, xoff, coff, bd
    cdef float running, acc, diff, gate, tcur
    cdef int best
    cdef bint pruned

    for i in prange(n, nogil=True, schedule="dynamic", chunksize=8,
                    num_threads=n_threads):
        tcur = tau[i]
        best = assign[i]
        for j in range(kb):
            if sentinel:
                gate = INFINITY
            else:
                gate = tcur * theta_factors[0]
            if partial_dists[i, j] > gate:
                continue
            survivors += 1
            running = partial_dists[i, j]
            pruned = False
            xoff = d_prime
            for b in range(n_blocks):
                bd = block_dims[b]
                coff = block_offsets[b] + j
                acc = 0.0
                for t in range(bd):
                    diff = x[i, xoff + t] - tail[coff + t * kb]
                    acc = acc + diff * diff
                dims_touched += bd
                running = running + acc
                xoff = xoff + bd
                if sentinel and b < n_blocks - 1:
                    gate = INFINITY
                else:
                    gate = tcur * theta_factors[b + 1]
                if running > gate:
                    pruned = True
                    break
            if not pruned:
                # running <= tau here (the last factor is exactly 1.0)
                if running < tcur:
                    best = bank_offset + j
                    tcur = running
                elif running == tcur and bank_offset + j < best:
                    best = bank_offset + j
        tau[i] = tcur
        assign[i] = best
    return survivors, dims_touched


def seed_thresholds(const float[:, ::1] x,
                    const float[:, ::1] centroids,
                    const int[::1] assign,
                    float[::1] out,
                    int n_threads):
    """out[i] = squared distance from x[i] to centroids[assign[i]]."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, t
    cdef Py_ssize_t c
    cdef float acc, diff

    for i in prange(n, nogil=True, schedule="static", num_threads=n_threads):
        c = assign[i]
        acc = 0.0
        for t in range(d):
            diff = x[i, t] - centroids[c, t]
            acc = acc + diff * diff
        out[i] = acc


def accumulate_centroid_sums(const float[:, ::1] x,
                             const int[::1] assign,
                             double[:, ::1] sums,
                             long long[::1] counts):
    """Accumulate per-cluster coordinate sums in double precision, row order."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, t, c

    for i in range(n):
        c = assign[i]
        counts[c] += 1
        for t in range(d):
            sums[c, t] += <double> x[i, t]


def portable_matmul(const float[:, ::1] a,
                    const float[:, ::1] b,
                    int dims,
                    float[:, ::1] out,
                    int n_threads):
    """out[i, l] = sum_{t < dims} a[i, t] * b[l, t], sequential float32.

    Each output cell is accumulated by one thread in ascending t, so the
    result is identical for any thread count.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, l, t
    cdef float acc

    for i in prange(n, nogil=True, schedule="static", num_threads=n_threads):
        for l in range(m):
            acc = 0.0
            for t in range(dims):
                acc = acc + a[i, t] * b[l, t]
            out[i, l] = acc
