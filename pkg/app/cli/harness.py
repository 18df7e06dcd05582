"""
Evaluation harness: dense oracles, error ratios, the uniform-column
baseline and seed fan-out.

error_ratio(L) = ||M - L L^T M||_F / ||M - U U^T M||_F with U the exact
top-k left singular vectors; both terms get a 1e-9 ||M||_F floor so an
exactly rank-k M gives a ratio of 1.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from app.cli.models import EvalRecord
from app.config import Settings, get_settings
from app.densela import project_out, topk_svd
from app.errors import ConfigError, DomainError
from app.fsketch.transforms import EntrywiseTransform, parse_transform
from app.lowrank import LowRankConfig, extract_columns, lowrank_run
from app.streams import StreamFile, UpdateStream, accumulate_dense, pmi_weights, read_text_stream
from app.utils.file_utils import PathLike

logger = logging.getLogger(__name__)

RATIO_FLOOR = 1e-9
TEXT_SUFFIXES = (".txt", ".tsv")


# =============================================================================
# Inputs
# =============================================================================

def load_stream(path: PathLike) -> UpdateStream:
    """Binary stream file, or the "i j delta" text format for .txt/.tsv."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"stream file not found: {path}")
    if path.suffix in TEXT_SUFFIXES:
        return read_text_stream(path)
    return StreamFile(path)


def load_column_weights(path: Optional[PathLike]) -> Optional[np.ndarray]:
    """p_j weights from a co-occurrence unigram sidecar (JSON with "unigram_counts")."""
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        sidecar = json.load(handle)
    return pmi_weights(np.asarray(sidecar["unigram_counts"], dtype=np.float64))


def parse_budget(text: Optional[str], n_rows: int) -> Optional[int]:
    """K-Set capacity per sketched column from "40" or a space share like "10%"."""
    if text is None or text == "":
        return None
    text = text.strip()
    try:
        if text.endswith("%"):
            share = float(text[:-1]) / 100.0
            if not 0 < share <= 1:
                raise ValueError(text)
            return max(1, int(share * n_rows))
        value = int(text)
    except ValueError:
        raise ConfigError(f"budget must be a positive integer or a percentage, got '{text}'") from None
    if value < 1:
        raise ConfigError(f"budget must be positive, got {value}")
    return value


# =============================================================================
# Oracles
# =============================================================================

def check_oracle_size(stream: UpdateStream, settings: Optional[Settings] = None) -> None:
    """
    Raises:
        ConfigError: If the stream is too large for the dense oracle
    """
    settings = settings or get_settings()
    if max(stream.shape) > settings.oracle_max_n:
        raise ConfigError(
            f"dense oracle refused for {stream.n_rows}x{stream.n_cols} (limit {settings.oracle_max_n}); "
            f"pass --no-exact-eval or raise FSKETCH_ORACLE_MAX_N"
        )


def dense_oracle(
    stream: UpdateStream,
    transform: EntrywiseTransform,
    column_weights: Optional[np.ndarray] = None,
    settings: Optional[Settings] = None,
) -> np.ndarray:
    """Dense M = f(A) diag(w), refusing matrices above FSKETCH_ORACLE_MAX_N.

    Raises:
        ConfigError: If the matrix is too large for the dense oracle
    """
    check_oracle_size(stream, settings)
    M = transform.apply(accumulate_dense(stream))
    if column_weights is not None:
        M = M * column_weights
    return M


def projection_residual(M: np.ndarray, L: np.ndarray) -> float:
    return float(np.linalg.norm(project_out(L, M)))


def optimal_residual(M: np.ndarray, k: int) -> float:
    """||M - [M]_k||_F from the singular values."""
    sigma = linalg.svdvals(M)
    return float(np.sqrt(np.sum(sigma[k:] ** 2)))


def error_ratio(M: np.ndarray, L: np.ndarray, k: int, optimum: Optional[float] = None) -> float:
    floor = RATIO_FLOOR * float(np.linalg.norm(M))
    best = optimal_residual(M, k) if optimum is None else optimum
    return (projection_residual(M, L) + floor) / (best + floor) if (best + floor) > 0 else 1.0


# =============================================================================
# Baseline
# =============================================================================

def baseline_columns(peak_bytes: int, n_rows: int, n_cols: int, k: int, word_bytes: int) -> int:
    """Number of dense columns fitting in the pipeline's expected sample payload."""
    return int(min(n_cols, max(k, peak_bytes // (word_bytes * n_rows))))


def uniform_baseline(
    stream: UpdateStream,
    transform: EntrywiseTransform,
    k: int,
    num_cols: int,
    seed: int = 0,
    column_weights: Optional[np.ndarray] = None,
    settings: Optional[Settings] = None,
) -> np.ndarray:
    """Top-k left singular vectors of f(T) for num_cols uniformly chosen columns T (one pass).

    Raises:
        DomainError: If num_cols is outside [k, n_cols]
    """
    settings = settings or get_settings()
    if not k <= num_cols <= stream.n_cols:
        raise DomainError(f"num_cols must be in [{k}, {stream.n_cols}], got {num_cols}")
    cols = np.sort(np.random.default_rng(seed).choice(stream.n_cols, size=num_cols, replace=False))
    T = extract_columns(stream, cols, transform, settings.fixed_point_scale)
    if column_weights is not None:
        T = T * column_weights[cols]
    L, _ = topk_svd(T, min(k, min(T.shape)))
    logger.info(f"Uniform baseline: {num_cols} columns, k={k}")
    return L


# =============================================================================
# Runs
# =============================================================================

def run_lowrank_eval(
    stream_path: str,
    dataset: str,
    k: int,
    f_spec: str,
    seed: int,
    budget: Optional[str] = None,
    sample_size: Optional[int] = None,
    variant: str = "experimental_qi",
    estimator: str = "scaled",
    mode: str = "sketch",
    exact_eval: bool = True,
    with_baseline: bool = True,
    weights_path: Optional[str] = None,
    record_timing: bool = True,
) -> EvalRecord:
    """One pipeline run plus its evaluation row. Top-level so worker processes can pickle it."""
    settings = get_settings()
    stream = load_stream(stream_path)
    transform = parse_transform(f_spec)
    weights = load_column_weights(weights_path)
    if exact_eval:
        check_oracle_size(stream, settings)
    cfg = LowRankConfig.build(
        k=k,
        budget=parse_budget(budget, stream.n_rows),
        sample_size=sample_size,
        adaptive_variant=variant,
        projection_estimator=estimator,
        mode=mode,
        seed=seed,
    )

    started = time.perf_counter()
    result = lowrank_run(stream, cfg, transform, column_weights=weights, settings=settings)
    wall_ms = (time.perf_counter() - started) * 1000.0 if record_timing else 0.0

    dense_bytes = settings.word_bytes * stream.n_rows * stream.n_cols
    space_ratio = result.peak_space_bytes / dense_bytes
    ratio = float("nan")
    baseline_ratio = None
    if exact_eval:
        M = dense_oracle(stream, transform, weights, settings)
        optimum = optimal_residual(M, k)
        ratio = error_ratio(M, result.L, k, optimum)
        if with_baseline:
            num_cols = baseline_columns(result.peak_nominal_bytes, stream.n_rows, stream.n_cols, k, settings.word_bytes)
            L_uniform = uniform_baseline(stream, transform, k, num_cols, seed=seed, column_weights=weights, settings=settings)
            baseline_ratio = error_ratio(M, L_uniform, k, optimum)
    elif result.residual_fro is not None:
        logger.info(f"Exact evaluation skipped; sketched residual estimate {result.residual_fro:.6g}")

    logger.info(f"{dataset} seed={seed}: space_ratio={space_ratio:.4f}, error_ratio={ratio:.4f}")
    return EvalRecord(
        dataset=dataset,
        n=stream.n_rows,
        k=k,
        budget=budget or "",
        gamma=sample_size,
        variant=variant if mode == "sketch" else f"{variant}+exact",
        seed=seed,
        space_ratio=space_ratio,
        error_ratio=ratio,
        baseline_error_ratio=baseline_ratio,
        wall_ms=wall_ms,
    )


def run_jobs(job: Callable[..., EvalRecord], params: Sequence[Dict], jobs: int = 1) -> List[EvalRecord]:
    """Run job(**p) for every parameter set, fanned out over `jobs` workers; order is preserved."""
    if jobs <= 1 or len(params) <= 1:
        return [job(**p) for p in params]
    logger.info(f"Running {len(params)} jobs on {jobs} workers")
    return list(Parallel(n_jobs=jobs)(delayed(job)(**p) for p in params))


def mean_record(records: Sequence[EvalRecord]) -> EvalRecord:
    """Average of numeric columns over seeds, seed="mean"."""
    if not records:
        raise ConfigError("no records to average")
    first = records[0]
    baselines = [r.baseline_error_ratio for r in records if r.baseline_error_ratio is not None]
    return first.model_copy(
        update={
            "seed": "mean",
            "space_ratio": float(np.mean([r.space_ratio for r in records])),
            "error_ratio": float(np.mean([r.error_ratio for r in records])),
            "baseline_error_ratio": float(np.mean(baselines)) if baselines else None,
            "wall_ms": float(np.mean([r.wall_ms for r in records])),
        }
    )
