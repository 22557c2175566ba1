"""Batched distance computation.

Full and partial squared L2 distances are produced by expanding inner
products (one dense matmul) with cached norms:

    ||x - y||^2 = ||x||^2 + ||y||^2 - 2 <x, y>

and the identity composes over a dimension split, so a distance at d_prime
plus the tail-block increments equals the full distance. Two matmul backends
exist: "blas" (NumPy's vendor BLAS sgemm) and "portable" (blocked kernel with
fixed accumulation order, deterministic for any thread count).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .kernels import get_kernels, resolve_threads
from .model import DimensionMismatch, NormCache, PdxCentroidBank


@dataclass
class DistanceBlock:
    """A batch of squared distances covering the leading d_covered dims."""

    values: np.ndarray  # (x_batch, y_batch) float32, clamped at 0
    d_covered: int


def resolve_gemm_backend(backend: str = "auto") -> str:
    if backend == "auto":
        env = os.environ.get("SUPERKMEANS_GEMM", "").strip().lower()
        if env in ("blas", "portable"):
            return env
        if env:
            raise ValueError(f"unknown SUPERKMEANS_GEMM value {env!r}")
        return "blas"
    if backend not in ("blas", "portable"):
        raise ValueError(f"unknown gemm backend {backend!r}")
    return backend


def matmul(a: np.ndarray, b: np.ndarray, dims: int | None = None,
           backend: str = "auto", threads: int | None = None,
           kernel_impl=None) -> np.ndarray:
    """Inner products over the leading `dims` dimensions: (n, m) float32."""
    if dims is None:
        dims = min(a.shape[1], b.shape[1])
    if dims > a.shape[1] or dims > b.shape[1]:
        raise DimensionMismatch(
            f"dims={dims} exceeds operand dims {a.shape[1]}, {b.shape[1]}"
        )
    af = np.ascontiguousarray(a[:, :dims], dtype=np.float32)
    bf = np.ascontiguousarray(b[:, :dims], dtype=np.float32)
    if resolve_gemm_backend(backend) == "blas":
        return af @ bf.T
    out = np.empty((af.shape[0], bf.shape[0]), dtype=np.float32)
    impl = kernel_impl if kernel_impl is not None else get_kernels()
    impl.portable_matmul(af, bf, dims, out, resolve_threads(threads))
    return out


def expand_to_sq_l2(inner: np.ndarray, x_norms: NormCache, y_norms: NormCache,
                    partial: bool = False) -> DistanceBlock:
    """Turn inner products into squared L2 distances using cached norms.

    partial=True uses the norms over the leading d_prime dims (which must
    match the dims the inner products were computed over). Tiny negative
    values from float cancellation are clamped to zero so threshold
    comparisons stay valid.
    """
    x_sq = x_norms.partial_sq if partial else x_norms.full_sq
    y_sq = y_norms.partial_sq if partial else y_norms.full_sq
    vals = inner * np.float32(-2.0)
    vals += x_sq[:, np.newaxis]
    vals += y_sq[np.newaxis, :]
    np.maximum(vals, np.float32(0.0), out=vals)
    d_covered = x_norms.d_prime if partial else -1
    return DistanceBlock(values=vals, d_covered=d_covered)


def sq_l2_block(xb: np.ndarray, yb: np.ndarray, x_norms: NormCache,
                y_norms: NormCache, partial: bool = False,
                backend: str = "auto", threads: int | None = None,
                kernel_impl=None) -> DistanceBlock:
    """Matmul + expansion in one call; dims taken from the norm cache."""
    dims = x_norms.d_prime if partial else xb.shape[1]
    inner = matmul(xb, yb, dims, backend=backend, threads=threads,
                   kernel_impl=kernel_impl)
    block = expand_to_sq_l2(inner, x_norms, y_norms, partial=partial)
    if not partial:
        block.d_covered = dims
    return block


def tail_block_sq_l2(x_tail_slab: np.ndarray, bank: PdxCentroidBank,
                     centroid_idx: int, block_idx: int) -> float:
    """Squared L2 increment over one tail block, read from the PDX layout.

    Accumulates in float32, ascending dimension order (the scan's order).
    """
    bd = int(bank.block_dims[block_idx])
    if x_tail_slab.shape[0] != bd:
        raise DimensionMismatch(
            f"slab has {x_tail_slab.shape[0]} dims, block {block_idx} has {bd}"
        )
    col = bank.block(block_idx)[:, centroid_idx]
    diff = x_tail_slab.astype(np.float32, copy=False) - col
    return float(np.cumsum(diff * diff, dtype=np.float32)[-1])
