"""Command-line surface: fit, eval, and gt subcommands.

fit   cluster a vector file, optionally persist centroids and a JSON report
eval  measure probe-search recall of persisted centroids on a dataset
gt    emit an exact ground-truth file for later evaluations
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import dataio, evaluation
from .core import KMeansResult, final_assign, fit
from .hierarchical import HierarchicalConfig, hierarchical_fit, reconcile_k
from .model import (
    EtrConfig,
    KMeansConfig,
    SuperKMeansError,
    WorkCounters,
    initial_d_prime,
    pruning_supported,
)
from .preprocess import apply_rotation, generate_rotation


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1], got {text}")
    return value


def _etr_tol(text: str):
    if text.lower() == "off":
        return None
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("ETR tolerance must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superkmeans",
        description="k-means for high-dimensional embeddings with adaptive "
                    "dimension pruning, plus IVF-style evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="cluster a vector file")
    p_fit.add_argument("--input", required=True, help="vector file (fvecs or fbin)")
    p_fit.add_argument("--format", choices=["fvecs", "fbin"], default=None,
                       help="input format; inferred from the suffix by default")
    p_fit.add_argument("--normalize", action="store_true",
                       help="L2-normalize rows on load (angular datasets)")
    p_fit.add_argument("--k", type=_positive_int, default=None,
                       help="cluster count; defaults to 4*ceil(sqrt(N))")
    p_fit.add_argument("--iters", type=_positive_int, default=25)
    p_fit.add_argument("--sample", type=_fraction, default=1.0,
                       help="fraction of vectors used for training")
    p_fit.add_argument("--etr-tol", type=_etr_tol, default=None, metavar="off|0.005|0.0025",
                       help="enable early termination by recall at this tolerance")
    p_fit.add_argument("--hierarchical", action="store_true",
                       help="two-phase meso/fine clustering")
    p_fit.add_argument("--meso-iters", type=_positive_int, default=3)
    p_fit.add_argument("--fine-iters", type=_positive_int, default=5)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--threads", type=_positive_int, default=None)
    p_fit.add_argument("--gemm-backend", choices=["auto", "blas", "portable"],
                       default="auto")
    p_fit.add_argument("--eval-queries", type=_positive_int, default=1000,
                       help="queries sampled from the data for report metrics")
    p_fit.add_argument("--out-centroids", default=None, help="persist the model here")
    p_fit.add_argument("--report", default=None, help="write a JSON run report here")

    p_eval = sub.add_parser("eval", help="evaluate persisted centroids")
    p_eval.add_argument("--centroids", required=True)
    p_eval.add_argument("--input", required=True)
    p_eval.add_argument("--format", choices=["fvecs", "fbin"], default=None)
    p_eval.add_argument("--normalize", action="store_true")
    p_eval.add_argument("--queries", default=None,
                        help="query vector file; sampled from the input if omitted")
    p_eval.add_argument("--n-queries", type=_positive_int, default=1000)
    p_eval.add_argument("--gt", default=None, help="precomputed ground-truth file")
    p_eval.add_argument("--nprobe-frac", type=_fraction, default=0.01)
    p_eval.add_argument("--topk", type=_positive_int, default=100)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--threads", type=_positive_int, default=None)
    p_eval.add_argument("--report", default=None)

    p_gt = sub.add_parser("gt", help="emit a brute-force ground-truth file")
    p_gt.add_argument("--input", required=True)
    p_gt.add_argument("--format", choices=["fvecs", "fbin"], default=None)
    p_gt.add_argument("--normalize", action="store_true")
    p_gt.add_argument("--queries", default=None,
                      help="query vector file; sampled from the input if omitted")
    p_gt.add_argument("--n-queries", type=_positive_int, default=1000)
    p_gt.add_argument("--topk", type=_positive_int, default=100)
    p_gt.add_argument("--seed", type=int, default=0)
    p_gt.add_argument("--out", required=True)
    return parser


def _thread_limits(threads):
    if threads is None:
        import contextlib
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def _load_queries(x, args):
    if args.queries is not None:
        return dataio.load_vectors(args.queries, args.format, normalize=args.normalize)
    rng = np.random.default_rng([args.seed, 9])
    n = min(args.n_queries, x.shape[0])
    return x[rng.choice(x.shape[0], size=n, replace=False)].copy()


def default_k(n: int) -> int:
    return 4 * int(np.ceil(np.sqrt(n)))


def _cmd_fit(args) -> int:
    x = dataio.load_vectors(args.input, args.format, normalize=args.normalize)
    n, d = x.shape
    k = args.k if args.k is not None else default_k(n)
    etr = EtrConfig(tolerance=args.etr_tol) if args.etr_tol is not None else None
    notes = {}
    t_start = time.perf_counter()
    with _thread_limits(args.threads):
        if args.hierarchical:
            cfg = HierarchicalConfig(
                k_total=k, meso_iters=args.meso_iters, fine_iters=args.fine_iters,
                max_iters=args.iters, sampling_fraction=args.sample, etr=etr,
                seed=args.seed, threads=args.threads, gemm_backend=args.gemm_backend,
            )
            result = hierarchical_fit(x, cfg)
            notes.update(reconcile_k(result.k, k))
        else:
            cfg = KMeansConfig(
                k=k, max_iters=args.iters, sampling_fraction=args.sample, etr=etr,
                seed=args.seed, threads=args.threads, gemm_backend=args.gemm_backend,
            )
            result = fit(x, cfg)

        t0 = time.perf_counter()
        assignments = final_assign(x, result, cfg)
        result.phase_seconds["final_assign"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        metrics = _report_metrics(x, result, assignments, args)
        result.phase_seconds["report_eval"] = time.perf_counter() - t0
    wall = time.perf_counter() - t_start
    metrics["wall_clock_seconds"] = wall

    counts = np.bincount(assignments, minlength=result.k)
    lists = evaluation.build_cluster_lists(assignments, result.k)
    if args.out_centroids:
        dataio.save_centroids(args.out_centroids, result.centroids, cfg.seed,
                              cluster_lists=lists)

    from dataclasses import asdict
    report = dataio.RunReport(
        command="fit",
        config=asdict(cfg),
        dataset={
            "path": str(args.input), "format": args.format or dataio.infer_format(args.input),
            "n": n, "dim": d, "sha256": dataio.sha256_file(args.input),
        },
        iterations=[asdict(s) for s in result.stats],
        final_metrics=metrics,
        phase_seconds=result.phase_seconds,
        terminated_by=result.terminated_by,
        notes={**notes, "n_train": result.n_train,
               "ppc_mean": evaluation.balance_stats(counts)["mean"],
               "ppc_std": evaluation.balance_stats(counts)["std_dev"]},
    )
    if args.report:
        report.save(args.report)
    print(
        f"fit: n={n} d={d} k={result.k} iters={len(result.stats)} "
        f"terminated_by={result.terminated_by} wcss={metrics['wcss']:.6g} "
        f"recall@100={metrics.get('recall_at_100', float('nan')):.4f} "
        f"wall={wall:.2f}s"
    )
    return 0


def _report_metrics(x, result: KMeansResult, assignments, args) -> dict:
    rng = np.random.default_rng([args.seed, 9])
    nq = min(args.eval_queries, x.shape[0])
    queries = x[rng.choice(x.shape[0], size=nq, replace=False)].copy()
    gt = evaluation.brute_force_topk(x, queries, 100)
    lists = evaluation.build_cluster_lists(assignments, result.k)
    nprobe = int(np.ceil(0.01 * result.k))
    metrics = evaluation.probe_eval(result.centroids, lists, x, queries, gt, nprobe)
    metrics["wcss"] = evaluation.wcss(x, result.centroids, assignments)
    counts = np.bincount(assignments, minlength=result.k)
    balance = evaluation.balance_stats(counts)
    metrics["ppc_mean"] = balance["mean"]
    metrics["ppc_std"] = balance["std_dev"]
    return metrics


def _cmd_eval(args) -> int:
    model = dataio.load_centroids(args.centroids)
    x = dataio.load_vectors(args.input, args.format, normalize=args.normalize)
    n, d = x.shape
    if d != model.dim:
        raise SuperKMeansError(f"input dim {d} != model dim {model.dim}")
    queries = _load_queries(x, args)
    with _thread_limits(args.threads):
        if args.gt is not None:
            gt = dataio.load_ground_truth(args.gt)
            if gt.k_gt < args.topk:
                raise SuperKMeansError(
                    f"ground truth holds top-{gt.k_gt}, need top-{args.topk}"
                )
        else:
            gt = evaluation.brute_force_topk(x, queries, args.topk)
        lists = model.cluster_lists
        if lists is None:
            cfg = KMeansConfig(k=model.k, seed=model.rotation_seed, threads=args.threads)
            pseudo = _model_result(model, d)
            assignments = final_assign(x, pseudo, cfg)
            lists = evaluation.build_cluster_lists(assignments, model.k)
        nprobe = int(np.ceil(args.nprobe_frac * model.k))
        metrics = evaluation.probe_eval(model.centroids, lists, x, queries, gt, nprobe,
                                        top_ks=(10, args.topk))
    report = dataio.RunReport(
        command="eval",
        config={"nprobe_frac": args.nprobe_frac, "nprobe": nprobe, "topk": args.topk,
                "n_queries": queries.shape[0], "seed": args.seed},
        dataset={"path": str(args.input), "n": n, "dim": d,
                 "sha256": dataio.sha256_file(args.input)},
        iterations=[],
        final_metrics=metrics,
        phase_seconds={},
        terminated_by="n/a",
        notes={"centroids": str(args.centroids), "k": model.k},
    )
    if args.report:
        report.save(args.report)
    print(
        f"eval: k={model.k} nprobe={nprobe} "
        f"recall@{args.topk}={metrics[f'recall_at_{args.topk}']:.4f} "
        f"explored={metrics['vectors_explored_mean']:.1f}"
    )
    return 0


def _model_result(model: dataio.CentroidModel, dim: int) -> KMeansResult:
    """Minimal result object so final_assign can run on a loaded model."""
    rotation = generate_rotation(dim, model.rotation_seed)
    return KMeansResult(
        centroids=model.centroids,
        assignments=np.empty(0, dtype=np.int32),
        stats=[],
        terminated_by="loaded",
        rotation=rotation,
        centroids_rotated=apply_rotation(model.centroids, rotation),
        d_prime_final=initial_d_prime(dim, 0.125) if pruning_supported(dim) else None,
        sample_indices=None,
        init_indices=np.empty(0, dtype=np.int64),
        work=WorkCounters(),
        phase_seconds={},
        peak_aux_values=0,
        n_train=0,
    )


def _cmd_gt(args) -> int:
    x = dataio.load_vectors(args.input, args.format, normalize=args.normalize)
    queries = _load_queries(x, args)
    with _thread_limits(args.threads if hasattr(args, "threads") else None):
        gt = evaluation.brute_force_topk(x, queries, args.topk)
    dataio.save_ground_truth(args.out, gt)
    print(f"gt: {queries.shape[0]} queries, top-{args.topk} -> {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "gt":
            return _cmd_gt(args)
    except SuperKMeansError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error("unknown command")
    return 2


if __name__ == "__main__":
    sys.exit(main())
