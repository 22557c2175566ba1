"""Exact Lloyd baseline used as a correctness oracle.

Every iteration computes full-dimension distances from every vector to every
centroid (batched expansion of inner products) and takes the exact argmin,
ties to the lowest index. Update and empty-cluster splitting reuse the same
routines as the main driver so trajectories are comparable under a shared
seed and initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import split_empty_clusters, update_centroids
from .model import KTooLarge, validate_vector_set
from .preprocess import row_sq_norms


@dataclass
class LloydResult:
    centroids: np.ndarray
    assignments: np.ndarray
    wcss_history: list = field(default_factory=list)
    assignment_history: list = field(default_factory=list)
    terminated_by: str = "max_iters"


def _assign_exact(x, centroids, x_sq, x_batch=4096):
    n = x.shape[0]
    y_sq = row_sq_norms(centroids)
    assign = np.empty(n, dtype=np.int32)
    best = np.empty(n, dtype=np.float32)
    for s in range(0, n, x_batch):
        e = min(n, s + x_batch)
        d2 = x[s:e] @ centroids.T
        d2 *= np.float32(-2.0)
        d2 += x_sq[s:e, np.newaxis]
        d2 += y_sq[np.newaxis, :]
        np.maximum(d2, np.float32(0.0), out=d2)
        assign[s:e] = np.argmin(d2, axis=1).astype(np.int32)
        best[s:e] = d2[np.arange(e - s), assign[s:e]]
    return assign, best


def fit_lloyd(x: np.ndarray, k: int | None = None, n_iters: int = 25,
              seed: int = 0, init: np.ndarray | None = None,
              split_empty: bool = True,
              collect_assignments: bool = False) -> LloydResult:
    """Plain Lloyd iterations from a given (or seeded) initialization.

    Pass `init` to share the starting centroids with another run; the split
    RNG stream matches the main driver's for the same seed.
    """
    x = validate_vector_set(x)
    n = x.shape[0]
    if init is None:
        if k is None:
            raise ValueError("either k or init must be given")
        if k > n:
            raise KTooLarge(f"k={k} exceeds {n} vectors")
        rng = np.random.default_rng([seed, 2])
        init = x[rng.choice(n, size=k, replace=False)].copy()
    centroids = np.ascontiguousarray(init, dtype=np.float32).copy()
    k = centroids.shape[0]
    rng_split = np.random.default_rng([seed, 3])
    x_sq = row_sq_norms(x)

    result = LloydResult(centroids=centroids, assignments=np.empty(0, dtype=np.int32))
    prev = None
    for _ in range(n_iters):
        assign, best = _assign_exact(x, centroids, x_sq)
        result.wcss_history.append(float(np.sum(best, dtype=np.float64)))
        if collect_assignments:
            result.assignment_history.append(assign.copy())
        if prev is not None and np.array_equal(prev, assign):
            result.terminated_by = "converged"
            result.assignments = assign
            break
        prev = assign
        centroids, counts = update_centroids(x, assign, k, prev_centroids=centroids)
        if split_empty:
            centroids, _ = split_empty_clusters(centroids, counts, rng_split)
        result.assignments = assign
    result.centroids = centroids
    return result
