import numpy as np
import pytest

from superkmeans.kernels import available_backends


def make_blobs(n, d, n_centers, seed, spread=5.0, noise=1.0):
    """Gaussian blobs around random centers; returns float32 (n, d)."""
    rng = np.random.default_rng(seed)
    centers = (rng.standard_normal((n_centers, d)) * spread).astype(np.float32)
    assign = rng.integers(0, n_centers, n)
    x = centers[assign] + (rng.standard_normal((n, d)) * noise).astype(np.float32)
    return np.ascontiguousarray(x, dtype=np.float32)


def make_skewed_blobs(n, d, n_centers, seed, spread=1.5, noise=1.0, decay=0.995):
    """Clustered data whose per-dimension variance decays geometrically."""
    x = make_blobs(n, d, n_centers, seed, spread=spread, noise=noise)
    scales = (decay ** np.arange(d)).astype(np.float32)
    return np.ascontiguousarray(x * scales, dtype=np.float32)


@pytest.fixture(params=available_backends())
def kernel_backend(request):
    return request.param
