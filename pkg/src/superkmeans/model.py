"""Core data model: dense vector sets, centroid bank layouts, and configuration.

Everything on the hot path is single-precision (float32); double precision is
used only where sums are accumulated (centroid updates, WCSS). Types here are
treated as immutable snapshots during a phase of the core loop; mutation only
happens between phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PDX_BLOCK = 64          # dimensions per tail block
MAX_BANK = 1024         # max centroids per bank (one Y batch)
D_PRIME_MIN = 16        # lower clamp for the GEMM cutoff
D_PRIME_ALIGN = 8       # cutoff alignment applied when adjusting


class SuperKMeansError(Exception):
    """Base class for library errors."""


class NonFiniteValue(SuperKMeansError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class DimensionMismatch(SuperKMeansError):
    pass


class EmptySample(SuperKMeansError):
    pass


class KTooLarge(SuperKMeansError):
    pass


class MalformedHeader(SuperKMeansError):
    pass


class InconsistentDim(SuperKMeansError):
    def __init__(self, row: int, expected: int, got: int):
        self.row = row
        super().__init__(f"record {row} declares dimension {got}, expected {expected}")


class TruncatedFile(SuperKMeansError):
    pass


class VersionMismatch(SuperKMeansError):
    pass


class ChecksumMismatch(SuperKMeansError):
    pass


def validate_vector_set(data, n_rows: int | None = None, dim: int | None = None) -> np.ndarray:
    """Validate and canonicalize a vector set.

    Accepts a 2-D array (or a flat buffer plus explicit n_rows/dim) and
    returns a C-contiguous float32 matrix. Raises DimensionMismatch if the
    declared shape does not match the data, NonFiniteValue on NaN/Inf.
    """
    arr = np.asarray(data)
    if n_rows is not None or dim is not None:
        if n_rows is None or dim is None:
            raise DimensionMismatch("n_rows and dim must be given together")
        if arr.size != n_rows * dim:
            raise DimensionMismatch(
                f"data has {arr.size} values, declared shape is {n_rows}x{dim}"
            )
        arr = arr.reshape(n_rows, dim)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={arr.ndim}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise NonFiniteValue(int(bad[0]), int(bad[1]))
    return arr


@dataclass
class RotationMatrix:
    """Dense orthogonal rotation, deterministic per seed."""

    data: np.ndarray    # (dim, dim) float32, row-major
    dim: int
    seed: int


@dataclass
class NormCache:
    """Squared norms per row: full, and partial over the leading d_prime dims."""

    full_sq: np.ndarray
    partial_sq: np.ndarray
    d_prime: int


@dataclass
class AssignmentState:
    """Per-vector current centroid and best (smallest) squared distance.

    best_sq_dist doubles as the pruning threshold tau: after a full
    iteration it equals the exact squared distance to the assigned centroid.
    """

    assignment: np.ndarray    # int32, values in [0, k)
    best_sq_dist: np.ndarray  # float32, nonnegative


@dataclass
class PdxCentroidBank:
    """Per-batch centroid storage split at d_prime.

    The leading d_prime dimensions stay row-major (`front`) so they can feed a
    dense matrix multiply. The trailing dimensions are stored in blocks of
    PDX_BLOCK dimensions, dimension-major within each block (`tail` is the
    packed concatenation of all blocks), which is what the progressive
    pruning scan reads. The last block may be ragged.
    """

    front: np.ndarray          # (k_batch, d_prime) float32, C-order
    tail: np.ndarray           # packed blocks, flat float32
    block_dims: np.ndarray     # (n_blocks,) int32
    block_offsets: np.ndarray  # (n_blocks,) int64, offsets into tail
    d_prime: int
    dim: int
    k_batch: int

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    def block(self, b: int) -> np.ndarray:
        """View of tail block b, shape (block_dims[b], k_batch), dimension-major."""
        off = int(self.block_offsets[b])
        bd = int(self.block_dims[b])
        return self.tail[off : off + bd * self.k_batch].reshape(bd, self.k_batch)

    def reconstruct(self) -> np.ndarray:
        """Rebuild the row-major (k_batch, dim) centroid matrix, bitwise."""
        out = np.empty((self.k_batch, self.dim), dtype=np.float32)
        out[:, : self.d_prime] = self.front
        pos = self.d_prime
        for b in range(self.n_blocks):
            bd = int(self.block_dims[b])
            out[:, pos : pos + bd] = self.block(b).T
            pos += bd
        return out


def tail_block_layout(dim: int, d_prime: int) -> tuple[np.ndarray, np.ndarray]:
    """Block dims and cumulative dim boundaries for the tail [d_prime, dim)."""
    if not 0 < d_prime < dim:
        raise DimensionMismatch(f"d_prime {d_prime} must lie in (0, {dim})")
    tail_dims = dim - d_prime
    n_full, ragged = divmod(tail_dims, PDX_BLOCK)
    dims = [PDX_BLOCK] * n_full + ([ragged] if ragged else [])
    block_dims = np.asarray(dims, dtype=np.int32)
    bounds = d_prime + np.cumsum(block_dims, dtype=np.int64)
    return block_dims, bounds


def pdxify(centroids: np.ndarray, d_prime: int) -> PdxCentroidBank:
    """Split a row-major centroid batch into front + dimension-major tail blocks."""
    centroids = np.ascontiguousarray(centroids, dtype=np.float32)
    k_batch, dim = centroids.shape
    if k_batch > MAX_BANK:
        raise DimensionMismatch(f"bank holds {k_batch} centroids, max is {MAX_BANK}")
    block_dims, _ = tail_block_layout(dim, d_prime)
    front = centroids[:, :d_prime].copy()
    tail = np.empty((dim - d_prime) * k_batch, dtype=np.float32)
    offsets = np.empty(len(block_dims), dtype=np.int64)
    off = 0
    pos = d_prime
    for b, bd in enumerate(block_dims):
        offsets[b] = off
        bd = int(bd)
        tail[off : off + bd * k_batch] = centroids[:, pos : pos + bd].T.ravel()
        off += bd * k_batch
        pos += bd
    return PdxCentroidBank(
        front=front,
        tail=tail,
        block_dims=block_dims,
        block_offsets=offsets,
        d_prime=d_prime,
        dim=dim,
        k_batch=k_batch,
    )


@dataclass(kw_only=True)
class EtrConfig:
    """Early-termination-by-recall settings."""

    tolerance: float = 0.005
    patience_iters: int = 2
    n_queries: int = 1000
    top_k: int = 100
    nprobe_fraction: float = 0.01

    def __post_init__(self):
        if self.tolerance < 0:
            raise ValueError("etr tolerance must be >= 0")
        if self.n_queries < 1 or self.top_k < 1:
            raise ValueError("etr n_queries and top_k must be >= 1")
        if not 0 < self.nprobe_fraction <= 1:
            raise ValueError("etr nprobe_fraction must be in (0, 1]")


@dataclass(kw_only=True)
class KMeansConfig:
    """All tunables of the clustering loop."""

    k: int
    max_iters: int = 25
    x_batch: int = 4096
    y_batch: int = 1024
    d_prime_init_fraction: float = 0.125
    delta_d: int = PDX_BLOCK
    epsilon0: float = 2.1
    prune_target_low: float = 0.95
    prune_target_high: float = 0.97
    d_prime_adjust_factor: float = 0.20
    sampling_fraction: float = 1.0
    etr: EtrConfig | None = None
    seed: int = 0
    threads: int | None = None        # worker cap everywhere; None = all cores
    gemm_backend: str = "auto"        # auto | blas | portable
    kernel_backend: str = "auto"      # auto | compiled | python
    split_empty: bool = True          # disabling is for Lloyd-property tests only
    pruning_sentinel: bool = False    # test-only: full scan, pure argmin semantics

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.x_batch < 1 or self.y_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.y_batch > MAX_BANK:
            raise ValueError(f"y_batch must be <= {MAX_BANK}")
        if not 0 < self.d_prime_init_fraction < 1:
            raise ValueError("d_prime_init_fraction must be in (0, 1)")
        if not 0 < self.sampling_fraction <= 1:
            raise ValueError("sampling_fraction must be in (0, 1]")
        if not self.prune_target_low < self.prune_target_high:
            raise ValueError("prune_target_low must be < prune_target_high")
        if not 0 < self.d_prime_adjust_factor < 1:
            raise ValueError("d_prime_adjust_factor must be in (0, 1)")
        if self.gemm_backend not in ("auto", "blas", "portable"):
            raise ValueError(f"unknown gemm backend {self.gemm_backend!r}")
        if self.kernel_backend not in ("auto", "compiled", "python"):
            raise ValueError(f"unknown kernel backend {self.kernel_backend!r}")


@dataclass
class IterationStats:
    """Per-iteration diagnostics; prune fields are None on full-GEMM iterations."""

    iter_index: int
    wcss: float
    n_empty_splits: int = 0
    prune_rate_after_gemm: float | None = None
    recall: float | None = None
    d_prime: int | None = None
    survivors: int = 0
    tail_dims_touched: int = 0
    n_changed: int | None = None
    timings: dict = field(default_factory=dict)


@dataclass
class WorkCounters:
    """Distance work in (vector x centroid x dimension) units, by phase."""

    full_pair_dims: int = 0    # full-GEMM distance evaluations
    front_pair_dims: int = 0   # partial GEMM over the leading d_prime dims
    tail_dims: int = 0         # tail dims touched by the pruning scan
    seed_dims: int = 0         # initial-threshold distance computations

    @property
    def total_dims(self) -> int:
        return self.full_pair_dims + self.front_pair_dims + self.tail_dims + self.seed_dims

    def merge(self, other: "WorkCounters") -> None:
        self.full_pair_dims += other.full_pair_dims
        self.front_pair_dims += other.front_pair_dims
        self.tail_dims += other.tail_dims
        self.seed_dims += other.seed_dims


class BufferLedger:
    """Tracks the library's own major allocations to audit peak memory.

    Counts float-equivalent values (4 bytes each); int32 buffers count one
    value per element, int64/float64 two. Only buffers registered by the
    driver are tracked; Python object overhead is out of scope.
    """

    def __init__(self):
        self._live: dict[str, int] = {}
        self.peak_values = 0

    @staticmethod
    def _values(arr: np.ndarray) -> int:
        return int(np.ceil(arr.size * arr.itemsize / 4))

    def register(self, name: str, arr: np.ndarray) -> np.ndarray:
        self.register_values(name, self._values(arr))
        return arr

    def register_values(self, name: str, n_values: int) -> None:
        self._live[name] = int(n_values)
        total = sum(self._live.values())
        if total > self.peak_values:
            self.peak_values = total

    def release(self, name: str) -> None:
        self._live.pop(name, None)


def initial_d_prime(dim: int, fraction: float) -> int:
    """GEMM cutoff at the start: floor(dim * fraction), clamped to the valid range."""
    d_prime = int(dim * fraction)
    return max(D_PRIME_MIN, min(dim - PDX_BLOCK, d_prime))


def pruning_supported(dim: int) -> bool:
    """The two-phase loop needs room for the cutoff clamp [16, dim-64]."""
    return dim - PDX_BLOCK >= D_PRIME_MIN
