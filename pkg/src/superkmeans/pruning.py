"""Adaptive-sampling pruning: threshold function and progressive tail scan.

After a random orthogonal rotation, a squared distance over the leading m of
d dimensions is an unbiased sample of m/d of the full squared distance. The
threshold

    theta(m, tau) = tau * (m / d) * (1 + epsilon0 / sqrt(m))^2

bounds how large that prefix distance can be while the full distance still
has a realistic chance of beating the current best tau; candidates above it
are discarded. At m == d the comparison is exact, so theta returns tau
itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import DistanceBlock
from .model import AssignmentState, KMeansConfig, PdxCentroidBank


@dataclass
class PruneOutcome:
    """Result of scanning all banks for one vector."""

    survivors_after_gemm: int
    final_assignment: int
    final_sq_dist: float
    dims_touched: int


def adsampling_threshold(m: int, tau: float, d: int, epsilon0: float) -> float:
    """Pruning bound for a squared distance observed over m of d dims."""
    if not 1 <= m <= d:
        raise ValueError(f"m={m} out of range [1, {d}]")
    if m == d:
        return tau
    ratio = 1.0 + epsilon0 / np.sqrt(m)
    return tau * (m / d) * ratio * ratio


def threshold_factors(d: int, d_prime: int, block_bounds: np.ndarray,
                      epsilon0: float) -> np.ndarray:
    """Per-checkpoint multipliers of tau: at d_prime, then after each block.

    The last checkpoint (m == d) is exactly 1.0 so the final comparison is
    against tau itself.
    """
    ms = np.concatenate(([d_prime], np.asarray(block_bounds, dtype=np.int64)))
    ratio = 1.0 + epsilon0 / np.sqrt(ms.astype(np.float64))
    factors = (ms / d) * ratio * ratio
    factors[ms == d] = 1.0
    return factors.astype(np.float32)


def initial_threshold(x: np.ndarray, prev_centroid: np.ndarray) -> float:
    """Exact squared distance to the previous assignment's updated position.

    Recomputed against the current iteration's centroids, this is a valid
    tau from the very first bank of the scan.
    """
    diff = x.astype(np.float32, copy=False) - prev_centroid.astype(np.float32, copy=False)
    return float(np.cumsum(diff * diff, dtype=np.float32)[-1])


def prune_and_assign(x_idx: int, partial_dists: DistanceBlock,
                     bank: PdxCentroidBank, state: AssignmentState,
                     cfg: KMeansConfig, x_row: np.ndarray,
                     bank_offset: int = 0) -> PruneOutcome:
    """Scan one bank for one vector, reference semantics.

    Centroids are visited in bank order. A candidate is skipped outright if
    its partial distance exceeds theta(d_prime, tau); otherwise tail blocks
    accumulate until the running distance exceeds the block checkpoint or all
    dims complete. A completed candidate below tau becomes the assignment and
    tightens tau (exact ties go to the lowest centroid index). This is the
    per-vector twin of kernels.scan_bank and matches it bitwise.
    """
    sentinel = cfg.pruning_sentinel
    eps0 = cfg.epsilon0
    d = bank.dim
    d_prime = bank.d_prime
    bounds = d_prime + np.cumsum(bank.block_dims, dtype=np.int64)
    factors = threshold_factors(d, d_prime, bounds, eps0)
    n_blocks = bank.n_blocks

    tau = np.float32(state.best_sq_dist[x_idx])
    best = int(state.assignment[x_idx])
    row = partial_dists.values[x_idx]
    survivors = 0
    dims_touched = 0
    for j in range(bank.k_batch):
        gate = np.float32(np.inf) if sentinel else np.float32(tau * factors[0])
        if row[j] > gate:
            continue
        survivors += 1
        running = np.float32(row[j])
        pruned = False
        pos = d_prime
        for b in range(n_blocks):
            bd = int(bank.block_dims[b])
            col = bank.block(b)[:, j]
            diff = x_row[pos : pos + bd].astype(np.float32, copy=False) - col
            acc = np.cumsum(diff * diff, dtype=np.float32)[-1]
            dims_touched += bd
            running = np.float32(running + acc)
            pos += bd
            if sentinel and b < n_blocks - 1:
                gate = np.float32(np.inf)
            else:
                gate = np.float32(tau * factors[b + 1])
            if running > gate:
                pruned = True
                break
        if not pruned:
            gid = bank_offset + j
            if running < tau:
                best = gid
                tau = running
            elif running == tau and gid < best:
                best = gid
    state.assignment[x_idx] = best
    state.best_sq_dist[x_idx] = tau
    return PruneOutcome(
        survivors_after_gemm=survivors,
        final_assignment=best,
        final_sq_dist=float(tau),
        dims_touched=dims_touched,
    )


def measure_prune_rate(outcomes, k_total: int) -> float:
    """Fraction of (vector, centroid) pairs discarded at d_prime."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no outcomes to measure")
    mean_survivors = sum(o.survivors_after_gemm for o in outcomes) / len(outcomes)
    return 1.0 - mean_survivors / k_total


def prune_rate_from_totals(survivors_total: int, n_vectors: int, k_total: int) -> float:
    if n_vectors == 0:
        raise ValueError("no vectors processed")
    return 1.0 - survivors_total / (n_vectors * k_total)
