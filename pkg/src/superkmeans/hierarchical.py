"""Two-phase hierarchical clustering built on the same core loop.

A coarse pass produces roughly sqrt(k) meso-clusters, then each meso-cluster
with n_i members is clustered independently into about sqrt(n_i) fine
clusters. The final centroid set is the union of the fine centroids, so the
achieved k generally differs from the requested one (reported, never
forced). The rotation is performed once and shared by both phases; fine fits
run on already-rotated rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import KMeansResult, _fit_rotated
from .evaluation import build_cluster_lists
from .kernels import resolve_threads
from .model import (
    BufferLedger,
    KMeansConfig,
    initial_d_prime,
    pruning_supported,
    validate_vector_set,
)
from .preprocess import apply_rotation, generate_rotation, sample_training_set, unapply_rotation


@dataclass(kw_only=True)
class HierarchicalConfig(KMeansConfig):
    """Hierarchical run settings; loop tunables are inherited.

    `k` is derived (it becomes the meso-phase cluster count) and must not be
    set directly.
    """

    k_total: int
    meso_k: int | None = None
    meso_iters: int = 3
    fine_iters: int = 5
    k: int = 0

    def __post_init__(self):
        if self.k_total < 1:
            raise ValueError("k_total must be >= 1")
        if self.meso_k is None:
            self.meso_k = int(np.ceil(np.sqrt(self.k_total)))
        if not 1 <= self.meso_k <= self.k_total:
            raise ValueError("meso_k must lie in [1, k_total]")
        if self.meso_iters < 1 or self.fine_iters < 1:
            raise ValueError("phase iteration counts must be >= 1")
        self.k = self.meso_k
        super().__post_init__()


def _loop_config(cfg: HierarchicalConfig, k: int, iters: int, seed: int,
                 threads: int | None) -> KMeansConfig:
    return KMeansConfig(
        k=k,
        max_iters=iters,
        x_batch=cfg.x_batch,
        y_batch=cfg.y_batch,
        d_prime_init_fraction=cfg.d_prime_init_fraction,
        delta_d=cfg.delta_d,
        epsilon0=cfg.epsilon0,
        prune_target_low=cfg.prune_target_low,
        prune_target_high=cfg.prune_target_high,
        d_prime_adjust_factor=cfg.d_prime_adjust_factor,
        sampling_fraction=1.0,
        etr=None,
        seed=seed,
        threads=threads,
        gemm_backend=cfg.gemm_backend,
        kernel_backend=cfg.kernel_backend,
        split_empty=cfg.split_empty,
        pruning_sentinel=cfg.pruning_sentinel,
    )


def _sub_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, 5, tag]).generate_state(1)[0])


def reconcile_k(fine_centroid_count: int, k_total: int) -> dict:
    """Achieved k is the sum of per-meso fine counts; no forced adjustment."""
    return {"requested_k": int(k_total), "achieved_k": int(fine_centroid_count)}


def hierarchical_fit(x: np.ndarray, cfg: HierarchicalConfig) -> KMeansResult:
    x = validate_vector_set(x)
    n_total, d = x.shape
    ledger = BufferLedger()
    ledger.register("input", x)

    xs, sample_idx = sample_training_set(x, cfg.sampling_fraction, [cfg.seed, 1],
                                         k=cfg.meso_k)
    rotation = generate_rotation(d, cfg.seed)
    ledger.register("rotation", rotation.data)
    xr = ledger.register("x_rotated", apply_rotation(xs, rotation))
    if sample_idx is not None:
        del xs
    n = xr.shape[0]

    threads = resolve_threads(cfg.threads)
    meso_cfg = _loop_config(cfg, cfg.meso_k, cfg.meso_iters, cfg.seed, cfg.threads)
    meso_out = _fit_rotated(xr, meso_cfg, ledger)
    work = meso_out.work
    phase = dict(meso_out.phase_seconds)

    groups = build_cluster_lists(meso_out.assignments, cfg.meso_k)
    # Pre-compute per-group fine k so centroid offsets are fixed before any
    # fine fit runs (lets fits execute in parallel deterministically).
    plans = []
    offset = 0
    for gi, idx in enumerate(groups):
        n_i = idx.size
        if n_i == 0:
            continue
        k_i = 1 if n_i == 1 else max(1, round(np.sqrt(n_i)))
        plans.append((gi, idx, k_i, offset))
        offset += k_i
    achieved_k = offset

    centroids_rot = np.empty((achieved_k, d), dtype=np.float32)
    global_assign = np.empty(n, dtype=np.int32)

    def run_fine(plan, inner_threads):
        gi, idx, k_i, off = plan
        if idx.size == 1:
            centroids_rot[off] = xr[idx[0]]
            global_assign[idx] = off
            return None
        members = np.ascontiguousarray(xr[idx])
        sub_cfg = _loop_config(cfg, k_i, cfg.fine_iters, _sub_seed(cfg.seed, gi),
                               inner_threads)
        out = _fit_rotated(members, sub_cfg, BufferLedger())
        centroids_rot[off : off + k_i] = out.centroids_rotated
        global_assign[idx] = off + out.assignments
        return out.work

    if threads > 1 and len(plans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fine_works = list(pool.map(lambda p: run_fine(p, 1), plans))
    else:
        fine_works = [run_fine(p, threads) for p in plans]
    for w in fine_works:
        if w is not None:
            work.merge(w)

    centroids = unapply_rotation(centroids_rot, rotation)
    d_prime_final = (
        initial_d_prime(d, cfg.d_prime_init_fraction) if pruning_supported(d) else None
    )
    return KMeansResult(
        centroids=centroids,
        assignments=global_assign,
        stats=meso_out.stats,
        terminated_by="max_iters",
        rotation=rotation,
        centroids_rotated=centroids_rot,
        d_prime_final=d_prime_final,
        sample_indices=sample_idx,
        init_indices=meso_out.init_indices,
        work=work,
        phase_seconds=phase,
        peak_aux_values=ledger.peak_values,
        n_train=n,
        recall_history=[],
    )
