"""Fast k-means for high-dimensional vector embeddings.

The core loop interleaves a partial dense matmul over the leading dimensions
with a progressive, layout-aware pruning scan over the rest, so most
(vector, centroid) pairs never touch the full dimensionality. Includes an
exact Lloyd oracle, brute-force ground truth, IVF-style probe evaluation,
early termination by recall, and a two-phase hierarchical variant.
"""

from .core import (
    KMeansResult,
    adjust_d_prime,
    check_convergence,
    final_assign,
    fit,
    split_empty_clusters,
    update_centroids,
)
from .evaluation import (
    GroundTruth,
    RecallHistory,
    balance_stats,
    brute_force_topk,
    build_cluster_lists,
    etr_probe,
    etr_should_stop,
    ivf_probe_search,
    probe_eval,
    recall_at_k,
    wcss,
)
from .hierarchical import HierarchicalConfig, hierarchical_fit, reconcile_k
from .kernels import HAS_COMPILED, available_backends, get_kernels
from .lloyd import LloydResult, fit_lloyd
from .model import (
    AssignmentState,
    EtrConfig,
    IterationStats,
    KMeansConfig,
    NormCache,
    PdxCentroidBank,
    RotationMatrix,
    SuperKMeansError,
    WorkCounters,
    pdxify,
    validate_vector_set,
)
from .preprocess import (
    apply_rotation,
    compute_norms,
    generate_rotation,
    init_centroids,
    sample_training_set,
)
from .pruning import (
    PruneOutcome,
    adsampling_threshold,
    initial_threshold,
    measure_prune_rate,
    prune_and_assign,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentState",
    "EtrConfig",
    "GroundTruth",
    "HAS_COMPILED",
    "HierarchicalConfig",
    "IterationStats",
    "KMeansConfig",
    "KMeansResult",
    "LloydResult",
    "NormCache",
    "PdxCentroidBank",
    "PruneOutcome",
    "RecallHistory",
    "RotationMatrix",
    "SuperKMeansError",
    "WorkCounters",
    "adjust_d_prime",
    "adsampling_threshold",
    "apply_rotation",
    "available_backends",
    "balance_stats",
    "brute_force_topk",
    "build_cluster_lists",
    "check_convergence",
    "compute_norms",
    "etr_probe",
    "etr_should_stop",
    "final_assign",
    "fit",
    "fit_lloyd",
    "generate_rotation",
    "get_kernels",
    "hierarchical_fit",
    "init_centroids",
    "initial_threshold",
    "ivf_probe_search",
    "measure_prune_rate",
    "pdxify",
    "probe_eval",
    "prune_and_assign",
    "recall_at_k",
    "reconcile_k",
    "sample_training_set",
    "split_empty_clusters",
    "update_centroids",
    "validate_vector_set",
    "wcss",
]
