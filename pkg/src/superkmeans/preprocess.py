"""Preprocessing before the core loop: rotation, sampling, init, norm caching.

The random orthogonal rotation spreads variance evenly across dimensions while
preserving L2 distances, which is what makes prefix-distance hypothesis
testing in the pruning phase reliable. Construction is the standard Haar
draw: QR of a square standard-Gaussian matrix with the R-diagonal sign fix.
"""

from __future__ import annotations

import numpy as np

from .model import (
    DimensionMismatch,
    EmptySample,
    KTooLarge,
    NormCache,
    RotationMatrix,
)


def generate_rotation(dim: int, seed: int) -> RotationMatrix:
    """Uniform random orthogonal dim x dim matrix, deterministic per seed."""
    if dim < 1:
        raise DimensionMismatch("rotation dimension must be >= 1")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    # Sign correction keeps the distribution Haar-uniform instead of biased
    # by LAPACK's sign convention.
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[np.newaxis, :]
    return RotationMatrix(data=q.astype(np.float32), dim=dim, seed=seed)


def apply_rotation(x: np.ndarray, rotation: RotationMatrix) -> np.ndarray:
    """Rotate row vectors: one dense multiply, row i -> row i @ R."""
    if x.shape[1] != rotation.dim:
        raise DimensionMismatch(
            f"vectors have dim {x.shape[1]}, rotation has dim {rotation.dim}"
        )
    return np.ascontiguousarray(x @ rotation.data, dtype=np.float32)


def unapply_rotation(x: np.ndarray, rotation: RotationMatrix) -> np.ndarray:
    """Inverse rotation; for orthogonal R the inverse is the transpose."""
    if x.shape[1] != rotation.dim:
        raise DimensionMismatch(
            f"vectors have dim {x.shape[1]}, rotation has dim {rotation.dim}"
        )
    return np.ascontiguousarray(x @ rotation.data.T, dtype=np.float32)


def sample_training_set(
    x: np.ndarray, fraction: float, seed: int, k: int | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Uniform subset without replacement: ceil(fraction * N) rows.

    Returns (subset, indices); fraction == 1.0 returns the input unchanged
    with indices None. Raises EmptySample when the subset cannot hold k
    centroids.
    """
    if not 0 < fraction <= 1:
        raise ValueError("sampling fraction must be in (0, 1]")
    n = x.shape[0]
    if fraction == 1.0:
        if k is not None and n < k:
            raise EmptySample(f"{n} vectors cannot seed {k} clusters")
        return x, None
    n_sample = int(np.ceil(fraction * n))
    if k is not None and n_sample < k:
        raise EmptySample(f"sample of {n_sample} vectors cannot seed {k} clusters")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=n_sample, replace=False)
    idx.sort()
    return x[idx], idx


def init_centroids(x: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """k distinct rows of x chosen uniformly without replacement (Forgy init).

    Returns (centroids, row_indices). Random init is deliberate: for
    high-dimensional embeddings it matches k-means++ quality at a fraction
    of the cost.
    """
    n = x.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} available vectors")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=False)
    return x[idx].copy(), idx


def row_sq_norms(m: np.ndarray, dims: int | None = None) -> np.ndarray:
    """Squared L2 norms per row over the leading `dims` dimensions (float32).

    Accumulated in double precision so partial norms stay monotone in dims.
    """
    view = m if dims is None else m[:, :dims]
    return np.einsum("ij,ij->i", view, view, dtype=np.float64).astype(np.float32)


def compute_norms(m: np.ndarray, d_prime: int) -> NormCache:
    """Full and partial (leading d_prime dims) squared norms per row."""
    if not 0 < d_prime <= m.shape[1]:
        raise DimensionMismatch(f"d_prime {d_prime} out of range for dim {m.shape[1]}")
    return NormCache(
        full_sq=row_sq_norms(m),
        partial_sq=row_sq_norms(m, d_prime),
        d_prime=d_prime,
    )
