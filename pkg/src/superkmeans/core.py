"""Clustering driver.

Iteration 1 computes full pairwise distances with one batched matmul per
(vector batch, centroid bank) pair, exactly like a vanilla Lloyd step.
Later iterations compute distances only over the leading d_prime dims with
the matmul, then let the progressive pruning scan finish (or discard) each
candidate from the dimension-major tail blocks. Between iterations:
centroid update (double-precision sums), empty-cluster splitting, cutoff
adaptation toward the target prune-rate band, and optional recall-based
early termination.

For dims too small to split at the cutoff clamp (d < 80) every iteration
runs the full-distance path; results are identical, just without pruning.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation
from .distance import expand_to_sq_l2, matmul, resolve_gemm_backend
from .kernels import get_kernels, resolve_threads
from .model import (
    PDX_BLOCK,
    D_PRIME_ALIGN,
    D_PRIME_MIN,
    BufferLedger,
    IterationStats,
    KMeansConfig,
    NormCache,
    RotationMatrix,
    WorkCounters,
    initial_d_prime,
    pdxify,
    pruning_supported,
    tail_block_layout,
    validate_vector_set,
)
from .preprocess import (
    apply_rotation,
    generate_rotation,
    init_centroids,
    row_sq_norms,
    sample_training_set,
    unapply_rotation,
)
from .pruning import prune_rate_from_totals, threshold_factors

SPLIT_EPS = np.float32(1.0 / 1024.0)


@dataclass
class KMeansResult:
    """Fit output. Centroids are returned in the original (un-rotated) space."""

    centroids: np.ndarray          # (k, d) float32, original space
    assignments: np.ndarray        # (n_train,) int32, last core-loop assignment
    stats: list[IterationStats]
    terminated_by: str             # max_iters | converged | etr
    rotation: RotationMatrix
    centroids_rotated: np.ndarray  # (k, d) float32, loop space
    d_prime_final: int | None      # None when the full-distance path ran
    sample_indices: np.ndarray | None
    init_indices: np.ndarray
    work: WorkCounters
    phase_seconds: dict
    peak_aux_values: int
    n_train: int
    recall_history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def update_centroids(x: np.ndarray, assignments: np.ndarray, k: int,
                     prev_centroids: np.ndarray | None = None,
                     kernel_impl=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean of assigned rows per cluster, accumulated in double precision.

    Empty clusters keep their previous position (the caller is expected to
    split them); with no previous centroids they become zero.
    """
    impl = kernel_impl if kernel_impl is not None else get_kernels()
    d = x.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    impl.accumulate_centroid_sums(x, assignments, sums, counts)
    centroids = np.empty((k, d), dtype=np.float32)
    nonempty = counts > 0
    centroids[nonempty] = (sums[nonempty] / counts[nonempty, np.newaxis]).astype(np.float32)
    if not np.all(nonempty):
        if prev_centroids is not None:
            centroids[~nonempty] = prev_centroids[~nonempty]
        else:
            centroids[~nonempty] = 0.0
    return centroids, counts


def split_empty_clusters(centroids: np.ndarray, counts: np.ndarray,
                         rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Split a donor cluster into each empty one, in place.

    Donors are drawn with probability proportional to their current count,
    and a donor's count is halved after each split so it is less likely to
    be picked again. The empty centroid becomes donor + delta and the donor
    becomes donor - delta, where delta flips sign per dimension and has
    magnitude 1/1024 of the donor's coordinate.
    """
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return centroids, 0
    k, d = centroids.shape
    signs = np.where(np.arange(d) % 2 == 0, 1.0, -1.0).astype(np.float32)
    for e in empties:
        probs = counts / counts.sum()
        donor = int(rng.choice(k, p=probs))
        row = centroids[donor].copy()
        delta = row * SPLIT_EPS * signs
        centroids[e] = row + delta
        centroids[donor] = row - delta
        moved = counts[donor] // 2
        counts[e] = counts[donor] - moved
        counts[donor] = moved
    return centroids, int(empties.size)


def adjust_d_prime(current_d_prime: int, prune_rate: float, cfg: KMeansConfig,
                   dim: int) -> int:
    """Move the cutoff toward the target prune-rate band.

    Above the band the matmul is doing more work than pruning needs, so the
    cutoff shrinks; below it, pruning lacks resolution, so it grows. The
    result is clamped to [16, dim - 64] and aligned to a multiple of 8 in
    the direction of the adjustment.
    """
    lo, hi = D_PRIME_MIN, dim - PDX_BLOCK
    if prune_rate > cfg.prune_target_high:
        new = int(np.floor(current_d_prime * (1.0 - cfg.d_prime_adjust_factor)))
        align_up = False
    elif prune_rate < cfg.prune_target_low:
        new = int(np.ceil(current_d_prime * (1.0 + cfg.d_prime_adjust_factor)))
        align_up = True
    else:
        return current_d_prime
    new = max(lo, min(hi, new))
    if align_up:
        new = -(-new // D_PRIME_ALIGN) * D_PRIME_ALIGN
    else:
        new = (new // D_PRIME_ALIGN) * D_PRIME_ALIGN
    return max(lo, min(hi, new))


def check_convergence(prev_assignments: np.ndarray, assignments: np.ndarray) -> bool:
    """True iff no assignment changed."""
    if prev_assignments.shape != assignments.shape:
        raise ValueError("assignment arrays differ in length")
    return bool(np.array_equal(prev_assignments, assignments))


def _norm_view(buf: np.ndarray, d_prime: int) -> NormCache:
    # Wraps the single reused norm buffer; full and partial share storage.
    return NormCache(full_sq=buf, partial_sq=buf, d_prime=d_prime)


def _full_assign_pass(xr, centroids, x_sq_buf, y_sq_buf, cfg, impl, threads,
                      tau, assign, work: WorkCounters | None = None):
    """Exact argmin over all centroids via batched full-dim distance blocks."""
    n, d = xr.shape
    k = centroids.shape[0]
    x_sq_buf[:] = row_sq_norms(xr)
    y_sq_buf[:] = row_sq_norms(centroids)
    tau[:] = np.inf
    backend = cfg.gemm_backend
    for s0 in range(0, n, cfg.x_batch):
        e0 = min(n, s0 + cfg.x_batch)
        xn = _norm_view(x_sq_buf[s0:e0], d)
        for s1 in range(0, k, cfg.y_batch):
            e1 = min(k, s1 + cfg.y_batch)
            inner = matmul(xr[s0:e0], centroids[s1:e1], d, backend=backend,
                           threads=threads, kernel_impl=impl)
            vals = expand_to_sq_l2(inner, xn, _norm_view(y_sq_buf[s1:e1], d)).values
            local = np.argmin(vals, axis=1)
            best = vals[np.arange(e0 - s0), local]
            better = best < tau[s0:e0]
            assign[s0:e0][better] = (s1 + local[better]).astype(np.int32)
            tau[s0:e0][better] = best[better]
    if work is not None:
        work.full_pair_dims += n * k * d


def _pruned_assign_pass(xr, centroids, d_prime, cfg, impl, threads, tau, assign,
                        x_sq_buf, y_sq_buf, work: WorkCounters,
                        timings: dict | None = None):
    """One partial-GEMM + pruning iteration over all batches and banks.

    Returns (survivors_total, tail_dims_touched, n_changed).
    """
    n, d = xr.shape
    k = centroids.shape[0]
    sentinel = cfg.pruning_sentinel
    backend = cfg.gemm_backend

    t0 = time.perf_counter()
    block_dims, bounds = tail_block_layout(d, d_prime)
    factors = threshold_factors(d, d_prime, bounds, cfg.epsilon0)
    banks = []
    for s1 in range(0, k, cfg.y_batch):
        e1 = min(k, s1 + cfg.y_batch)
        banks.append((s1, pdxify(centroids[s1:e1], d_prime)))
    t_pdx = time.perf_counter() - t0

    t0 = time.perf_counter()
    x_sq_buf[:] = row_sq_norms(xr, d_prime)
    y_sq_buf[:] = row_sq_norms(centroids, d_prime)
    t_norms = time.perf_counter() - t0

    survivors = 0
    tail_touched = 0
    n_changed = 0
    t_gemm = 0.0
    t_scan = 0.0
    for s0 in range(0, n, cfg.x_batch):
        e0 = min(n, s0 + cfg.x_batch)
        xb = xr[s0:e0]
        ab = assign[s0:e0]
        tb = tau[s0:e0]
        prev = ab.copy()

        t0 = time.perf_counter()
        if sentinel:
            tb[:] = np.inf
        else:
            impl.seed_thresholds(xb, centroids, ab, tb, threads)
            work.seed_dims += (e0 - s0) * d
        xb_front = np.ascontiguousarray(xb[:, :d_prime])
        t_scan += time.perf_counter() - t0

        xn = _norm_view(x_sq_buf[s0:e0], d_prime)
        for s1, bank in banks:
            t0 = time.perf_counter()
            inner = matmul(xb_front, bank.front, d_prime, backend=backend,
                           threads=threads, kernel_impl=impl)
            vals = expand_to_sq_l2(
                inner, xn, _norm_view(y_sq_buf[s1 : s1 + bank.k_batch], d_prime),
                partial=True,
            ).values
            t_gemm += time.perf_counter() - t0

            t0 = time.perf_counter()
            sv, td = impl.scan_bank(
                vals, xb, bank.tail, bank.block_offsets, bank.block_dims,
                factors, d_prime, s1, tb, ab, sentinel, threads,
            )
            t_scan += time.perf_counter() - t0
            survivors += int(sv)
            tail_touched += int(td)
        n_changed += int(np.count_nonzero(prev != ab))
    work.front_pair_dims += n * k * d_prime
    work.tail_dims += tail_touched
    if timings is not None:
        timings["gemm"] = timings.get("gemm", 0.0) + t_gemm + t_norms
        timings["pruning"] = timings.get("pruning", 0.0) + t_scan + t_pdx
    return survivors, tail_touched, n_changed


@dataclass
class _LoopOutput:
    centroids_rotated: np.ndarray
    assignments: np.ndarray
    best_sq_dist: np.ndarray
    stats: list
    terminated_by: str
    d_prime_final: int | None
    init_indices: np.ndarray
    work: WorkCounters
    recall_history: list
    phase_seconds: dict


def _fit_rotated(xr: np.ndarray, cfg: KMeansConfig, ledger: BufferLedger,
                 inspect=None) -> _LoopOutput:
    """Core loop on already-rotated data (shared by fit and hierarchical)."""
    n, d = xr.shape
    k = cfg.k
    impl = get_kernels(getattr(cfg, "kernel_backend", None))
    threads = resolve_threads(cfg.threads)
    work = WorkCounters()
    phase = {}

    centroids, init_idx = init_centroids(xr, k, [cfg.seed, 2])
    ledger.register("centroids", centroids)
    assign = ledger.register("assignments", np.zeros(n, dtype=np.int32))
    tau = ledger.register("best_sq_dist", np.full(n, np.inf, dtype=np.float32))
    x_sq_buf = ledger.register("x_norms", np.empty(n, dtype=np.float32))
    y_sq_buf = ledger.register("y_norms", np.empty(k, dtype=np.float32))
    rng_split = np.random.default_rng([cfg.seed, 3])

    pruned_mode = pruning_supported(d)
    d_prime = initial_d_prime(d, cfg.d_prime_init_fraction) if pruned_mode else None

    etr_ctx = None
    if cfg.etr is not None:
        t0 = time.perf_counter()
        rng_q = np.random.default_rng([cfg.seed, 4])
        nq = min(cfg.etr.n_queries, n)
        q_idx = rng_q.choice(n, size=nq, replace=False)
        queries = ledger.register("etr_queries", xr[q_idx].copy())
        gt = evaluation.brute_force_topk(xr, queries, cfg.etr.top_k)
        ledger.register("etr_gt", gt.indices)
        nprobe = int(np.ceil(cfg.etr.nprobe_fraction * k))
        etr_ctx = (queries, gt, nprobe)
        phase["ground_truth"] = time.perf_counter() - t0

    stats = []
    recall_history = []
    terminated = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        timings = {}
        survivors = tail_touched = 0
        n_changed = None
        prune_rate = None
        pruned_iter = pruned_mode and it > 1
        d_prime_used = d_prime if pruned_iter else None

        if not pruned_iter:
            t0 = time.perf_counter()
            prev = assign.copy() if it > 1 else None
            _full_assign_pass(xr, centroids, x_sq_buf, y_sq_buf, cfg, impl,
                              threads, tau, assign, work)
            if prev is not None:
                n_changed = int(np.count_nonzero(prev != assign))
            timings["gemm"] = time.perf_counter() - t0
        else:
            survivors, tail_touched, n_changed = _pruned_assign_pass(
                xr, centroids, d_prime, cfg, impl, threads, tau, assign,
                x_sq_buf, y_sq_buf, work, timings,
            )
            prune_rate = prune_rate_from_totals(survivors, n, k)

        wcss = float(np.sum(tau, dtype=np.float64))
        if inspect is not None:
            inspect(it, {
                "assignments": assign.copy(),
                "best_sq_dist": tau.copy(),
                "centroids_rotated": centroids.copy(),
                "d_prime": d_prime_used,
                "prune_rate": prune_rate,
            })

        converged = n_changed == 0
        if converged:
            stats.append(IterationStats(
                iter_index=it, wcss=wcss, n_empty_splits=0,
                prune_rate_after_gemm=prune_rate, d_prime=d_prime_used,
                survivors=survivors, tail_dims_touched=tail_touched,
                n_changed=n_changed, timings=timings,
            ))
            terminated = "converged"
            break

        t0 = time.perf_counter()
        ledger.register_values("update_tmp", 3 * k * d)  # f64 sums + new buffer
        centroids, counts = update_centroids(xr, assign, k, prev_centroids=centroids,
                                             kernel_impl=impl)
        ledger.release("update_tmp")
        ledger.register("centroids", centroids)
        n_splits = 0
        if cfg.split_empty:
            centroids, n_splits = split_empty_clusters(centroids, counts, rng_split)
        timings["update"] = time.perf_counter() - t0

        if pruned_iter:
            d_prime = adjust_d_prime(d_prime, prune_rate, cfg, d)

        recall = None
        if etr_ctx is not None:
            t0 = time.perf_counter()
            queries, gt, nprobe = etr_ctx
            recall = evaluation.etr_probe(
                centroids, xr, assign, queries, gt, nprobe, cfg.etr.top_k,
            )
            recall_history.append(recall)
            timings["etr"] = time.perf_counter() - t0

        stats.append(IterationStats(
            iter_index=it, wcss=wcss, n_empty_splits=n_splits,
            prune_rate_after_gemm=prune_rate, recall=recall, d_prime=d_prime_used,
            survivors=survivors, tail_dims_touched=tail_touched,
            n_changed=n_changed, timings=timings,
        ))

        if etr_ctx is not None and evaluation.etr_should_stop(
                recall_history, cfg.etr.tolerance, cfg.etr.patience_iters):
            terminated = "etr"
            break

    for key in ("gemm", "pruning", "update", "etr"):
        phase[key] = sum(s.timings.get(key, 0.0) for s in stats)
    return _LoopOutput(
        centroids_rotated=centroids,
        assignments=assign,
        best_sq_dist=tau,
        stats=stats,
        terminated_by=terminated,
        d_prime_final=d_prime,
        init_indices=init_idx,
        work=work,
        recall_history=recall_history,
        phase_seconds=phase,
    )


def fit(x: np.ndarray, cfg: KMeansConfig, inspect=None) -> KMeansResult:
    """Run the full pipeline: sample, rotate, cluster, un-rotate."""
    x = validate_vector_set(x)
    n_total, d = x.shape
    ledger = BufferLedger()
    ledger.register("input", x)
    phase = {}

    xs, sample_idx = sample_training_set(x, cfg.sampling_fraction, [cfg.seed, 1], k=cfg.k)
    if sample_idx is not None:
        ledger.register("sample", xs)

    t0 = time.perf_counter()
    rotation = generate_rotation(d, cfg.seed)
    ledger.register("rotation", rotation.data)
    xr = ledger.register("x_rotated", apply_rotation(xs, rotation))
    if sample_idx is not None:
        del xs  # original-space sample is no longer needed
        ledger.release("sample")
    phase["rotation"] = time.perf_counter() - t0

    out = _fit_rotated(xr, cfg, ledger, inspect=inspect)
    phase.update(out.phase_seconds)

    t0 = time.perf_counter()
    centroids = ledger.register("centroids_out", unapply_rotation(out.centroids_rotated, rotation))
    phase["unrotate"] = time.perf_counter() - t0

    return KMeansResult(
        centroids=centroids,
        assignments=out.assignments,
        stats=out.stats,
        terminated_by=out.terminated_by,
        rotation=rotation,
        centroids_rotated=out.centroids_rotated,
        d_prime_final=out.d_prime_final,
        sample_indices=sample_idx,
        init_indices=out.init_indices,
        work=out.work,
        phase_seconds=phase,
        peak_aux_values=ledger.peak_values,
        n_train=xr.shape[0],
        recall_history=out.recall_history,
    )


def final_assign(x_full: np.ndarray, result: KMeansResult,
                 cfg: KMeansConfig) -> np.ndarray:
    """Assign every vector of the full (unsampled) set to the fit's centroids.

    Runs the same partial-distance + pruning pass used inside the loop,
    rotating each batch lazily. The pruning threshold is seeded from the
    trained assignment for vectors that were in the training sample and from
    a full-distance probe against centroid 0 for the rest.
    """
    x_full = validate_vector_set(x_full)
    n, d = x_full.shape
    if d != result.rotation.dim:
        raise ValueError(f"vectors have dim {d}, model has dim {result.rotation.dim}")
    impl = get_kernels(getattr(cfg, "kernel_backend", None))
    threads = resolve_threads(cfg.threads)
    centroids = result.centroids_rotated
    k = centroids.shape[0]
    backend = cfg.gemm_backend

    assign = np.zeros(n, dtype=np.int32)
    if result.sample_indices is not None:
        assign[result.sample_indices] = result.assignments
    elif result.assignments.shape[0] == n:
        assign[:] = result.assignments

    pruned_mode = pruning_supported(d) and result.d_prime_final is not None
    if pruned_mode:
        d_prime = result.d_prime_final
        block_dims, bounds = tail_block_layout(d, d_prime)
        factors = threshold_factors(d, d_prime, bounds, cfg.epsilon0)
        banks = []
        for s1 in range(0, k, cfg.y_batch):
            e1 = min(k, s1 + cfg.y_batch)
            banks.append((s1, pdxify(centroids[s1:e1], d_prime)))
        y_sq = row_sq_norms(centroids, d_prime)
    else:
        y_sq = row_sq_norms(centroids)

    tau = np.empty(cfg.x_batch, dtype=np.float32)
    for s0 in range(0, n, cfg.x_batch):
        e0 = min(n, s0 + cfg.x_batch)
        xb = apply_rotation(x_full[s0:e0], result.rotation)
        ab = assign[s0:e0]
        tb = tau[: e0 - s0]
        if pruned_mode:
            impl.seed_thresholds(xb, centroids, ab, tb, threads)
            result.work.seed_dims += (e0 - s0) * d
            xb_front = np.ascontiguousarray(xb[:, :d_prime])
            x_sq = row_sq_norms(xb, d_prime)
            xn = _norm_view(x_sq, d_prime)
            for s1, bank in banks:
                inner = matmul(xb_front, bank.front, d_prime, backend=backend,
                               threads=threads, kernel_impl=impl)
                vals = expand_to_sq_l2(
                    inner, xn, _norm_view(y_sq[s1 : s1 + bank.k_batch], d_prime),
                    partial=True,
                ).values
                _, td = impl.scan_bank(
                    vals, xb, bank.tail, bank.block_offsets, bank.block_dims,
                    factors, d_prime, s1, tb, ab, False, threads,
                )
                result.work.tail_dims += int(td)
            result.work.front_pair_dims += (e0 - s0) * k * d_prime
        else:
            x_sq = row_sq_norms(xb)
            xn = _norm_view(x_sq, d)
            tb[:] = np.inf
            for s1 in range(0, k, cfg.y_batch):
                e1 = min(k, s1 + cfg.y_batch)
                inner = matmul(xb, centroids[s1:e1], d, backend=backend,
                               threads=threads, kernel_impl=impl)
                vals = expand_to_sq_l2(inner, xn, _norm_view(y_sq[s1:e1], d)).values
                local = np.argmin(vals, axis=1)
                best = vals[np.arange(e0 - s0), local]
                better = best < tb
                ab[better] = (s1 + local[better]).astype(np.int32)
                tb[better] = best[better]
            result.work.full_pair_dims += (e0 - s0) * k * d
    return assign
