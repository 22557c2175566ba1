"""Search-quality evaluation: exact ground truth, IVF-style probe search,
recall, WCSS, cluster balance, and the early-termination decision rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DimensionMismatch
from .preprocess import row_sq_norms


@dataclass
class GroundTruth:
    """Exact top-k neighbors per query, ascending by squared L2 distance.

    Ties are broken by the lower vector index, so results are deterministic.
    """

    indices: np.ndarray   # (n_queries, k_gt) int64
    distances: np.ndarray  # (n_queries, k_gt) float32
    k_gt: int
    metric: str = "l2"


@dataclass
class RecallHistory:
    """Recall per iteration plus the stop rule's tolerance and patience."""

    values: list = field(default_factory=list)
    tolerance: float = 0.005
    patience: int = 2

    def append(self, value: float) -> None:
        self.values.append(float(value))

    def should_stop(self) -> bool:
        return etr_should_stop(self.values, self.tolerance, self.patience)


def _sq_dists_to(x: np.ndarray, x_sq: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """(n_queries, n) squared L2 distances, clamped at zero."""
    q_sq = row_sq_norms(queries)
    d2 = queries @ x.T
    d2 *= np.float32(-2.0)
    d2 += q_sq[:, np.newaxis]
    d2 += x_sq[np.newaxis, :]
    np.maximum(d2, np.float32(0.0), out=d2)
    return d2


def brute_force_topk(x: np.ndarray, queries: np.ndarray, k_gt: int,
                     query_batch: int = 128) -> GroundTruth:
    """Exact top-k_gt by squared L2 over the whole collection.

    Queries are processed in batches to bound the distance-buffer size.
    """
    if x.shape[1] != queries.shape[1]:
        raise DimensionMismatch(
            f"data dim {x.shape[1]} != query dim {queries.shape[1]}"
        )
    if k_gt > x.shape[0]:
        raise ValueError(f"k_gt={k_gt} exceeds collection size {x.shape[0]}")
    nq = queries.shape[0]
    x_sq = row_sq_norms(x)
    indices = np.empty((nq, k_gt), dtype=np.int64)
    dists = np.empty((nq, k_gt), dtype=np.float32)
    for s in range(0, nq, query_batch):
        e = min(nq, s + query_batch)
        d2 = _sq_dists_to(x, x_sq, queries[s:e])
        order = np.argsort(d2, axis=1, kind="stable")[:, :k_gt]
        indices[s:e] = order
        dists[s:e] = np.take_along_axis(d2, order, axis=1)
    return GroundTruth(indices=indices, distances=dists, k_gt=k_gt)


def build_cluster_lists(assignments: np.ndarray, k: int) -> list[np.ndarray]:
    """Invert assignments into per-cluster index lists (a transient IVF)."""
    order = np.argsort(assignments, kind="stable")
    counts = np.bincount(assignments, minlength=k)
    bounds = np.cumsum(counts)[:-1]
    return np.split(order, bounds)


def ivf_probe_search(centroids: np.ndarray, cluster_lists, x: np.ndarray,
                     q: np.ndarray, nprobe: int, top_k: int):
    """Scan the nprobe clusters whose centroids are nearest to q.

    Returns (indices, distances, vectors_explored). Indices refer to rows of
    x; distances are exact squared L2 over the scanned candidates.
    """
    k = centroids.shape[0]
    nprobe = min(nprobe, k)
    q2 = q.reshape(1, -1).astype(np.float32)
    c_d2 = _sq_dists_to(centroids, row_sq_norms(centroids), q2)[0]
    probe = np.argsort(c_d2, kind="stable")[:nprobe]
    cand = np.concatenate([cluster_lists[c] for c in probe])
    if cand.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float32), 0
    cx = x[cand]
    d2 = _sq_dists_to(cx, row_sq_norms(cx), q2)[0]
    # Ties resolve to the lower global index: sort by (distance, index).
    order = np.lexsort((cand, d2))[:top_k]
    return cand[order].astype(np.int64), d2[order], int(cand.size)


def recall_at_k(result_ids: np.ndarray, gt_row: np.ndarray, k: int) -> float:
    """|result ∩ ground truth| / k over the first k entries of each."""
    if len(result_ids) < k or len(gt_row) < k:
        raise ValueError(f"need at least {k} entries on both sides")
    hits = np.intersect1d(result_ids[:k], gt_row[:k]).size
    return hits / k


def etr_should_stop(history, tolerance: float | None = None, patience: int = 2) -> bool:
    """Stop once no step in the patience window improved recall beyond tolerance.

    With the default patience of 2, at least three observations are needed:
    both max(last, second_last) - third_last and last - second_last must be
    within tolerance.
    """
    if isinstance(history, RecallHistory):
        tolerance = history.tolerance if tolerance is None else tolerance
        patience = history.patience
        history = history.values
    if tolerance is None:
        raise ValueError("tolerance required when history is a plain sequence")
    values = list(history)
    if len(values) < patience + 1:
        return False
    window = values[-(patience + 1):]
    base = window[0]
    if max(window[1:]) - base > tolerance:
        return False
    for prev, cur in zip(window[1:], window[2:]):
        if cur - prev > tolerance:
            return False
    return True


def etr_probe(centroids: np.ndarray, train_x: np.ndarray,
              assignments: np.ndarray, queries: np.ndarray, gt: GroundTruth,
              nprobe: int, top_k: int) -> float:
    """Mean recall of an IVF probe search built from the current state.

    Cluster lists are rebuilt from the current assignments each call; the
    centroid ranking is vectorized across queries, the candidate scans run
    per query.
    """
    k = centroids.shape[0]
    nprobe = min(max(1, nprobe), k)
    lists = build_cluster_lists(assignments, k)
    c_sq = row_sq_norms(centroids)
    x_sq = row_sq_norms(train_x)
    total = 0.0
    nq = queries.shape[0]
    q_batch = 256
    for s in range(0, nq, q_batch):
        e = min(nq, s + q_batch)
        c_d2 = _sq_dists_to(centroids, c_sq, queries[s:e])
        probe = np.argsort(c_d2, axis=1, kind="stable")[:, :nprobe]
        for qi in range(e - s):
            cand = np.concatenate([lists[c] for c in probe[qi]])
            d2 = _sq_dists_to(train_x[cand], x_sq[cand], queries[s + qi : s + qi + 1])[0]
            take = min(top_k, cand.size)
            order = np.lexsort((cand, d2))[:take]
            hits = np.isin(cand[order], gt.indices[s + qi, :top_k], assume_unique=True)
            total += int(hits.sum()) / top_k
    return total / nq


def probe_eval(centroids: np.ndarray, cluster_lists, x: np.ndarray,
               queries: np.ndarray, gt: GroundTruth, nprobe: int,
               top_ks=(10, 100)) -> dict:
    """Probe-search quality over a query set: recall@k levels plus the mean
    number of vectors scanned per query."""
    k = centroids.shape[0]
    nprobe = min(max(1, nprobe), k)
    top_ks = sorted({t for t in top_ks if t <= gt.k_gt})
    c_sq = row_sq_norms(centroids)
    x_sq = row_sq_norms(x)
    nq = queries.shape[0]
    recalls = {t: 0.0 for t in top_ks}
    explored = 0
    q_batch = 256
    for s in range(0, nq, q_batch):
        e = min(nq, s + q_batch)
        c_d2 = _sq_dists_to(centroids, c_sq, queries[s:e])
        probe = np.argsort(c_d2, axis=1, kind="stable")[:, :nprobe]
        for qi in range(e - s):
            cand = np.concatenate([cluster_lists[c] for c in probe[qi]])
            explored += cand.size
            d2 = _sq_dists_to(x[cand], x_sq[cand], queries[s + qi : s + qi + 1])[0]
            order = np.lexsort((cand, d2))
            found = cand[order]
            for t in top_ks:
                take = min(t, found.size)
                hits = np.isin(found[:take], gt.indices[s + qi, :t], assume_unique=True)
                recalls[t] += int(hits.sum()) / t
    out = {f"recall_at_{t}": recalls[t] / nq for t in top_ks}
    out["vectors_explored_mean"] = explored / nq
    return out


def wcss(x: np.ndarray, centroids: np.ndarray, assignments: np.ndarray,
         batch: int = 4096) -> float:
    """Sum of squared distances to assigned centroids, double accumulation."""
    if x.shape[1] != centroids.shape[1]:
        raise DimensionMismatch("dim mismatch between vectors and centroids")
    total = 0.0
    for s in range(0, x.shape[0], batch):
        e = min(x.shape[0], s + batch)
        diff = x[s:e].astype(np.float64) - centroids[assignments[s:e]].astype(np.float64)
        total += float(np.einsum("ij,ij->", diff, diff))
    return total


def balance_stats(counts: np.ndarray) -> dict:
    """Points-per-cluster mean and population standard deviation."""
    counts = np.asarray(counts, dtype=np.float64)
    return {"mean": float(counts.mean()), "std_dev": float(counts.std())}
