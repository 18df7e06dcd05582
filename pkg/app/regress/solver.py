"""
Sketch-and-solve least squares on a streamed, entrywise-transformed design.

    x = argmin || (S f(A)) x - S b ||_2

S f(A) is estimated in one pass with a row_shared product sketch over the
transposed stream (weights S^T); S b is exact. Rank-deficient systems get
the minimum-norm solution and a flag.

With normalize=True the design is divided by the spectral norm of the
sketched matrix, and x solves the normalized problem.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy import linalg

from app.config import Settings, get_settings
from app.densela import SketchTransform
from app.errors import ConfigError, DomainError, PipelineError
from app.fsketch.transforms import parse_transform
from app.lowrank.models import PipelineMode
from app.matprod import MatrixProductSketch
from app.regress.models import RegressionConfig, RegressionResult
from app.streams.models import UpdateStream, accumulate_dense

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10


def sketch_design(stream: UpdateStream, S: SketchTransform, cfg: RegressionConfig, settings: Settings):
    """One pass estimating S f(A); returns (SA, space report, failed column count)."""
    transform = parse_transform(cfg.transform)
    n, d = stream.shape
    if cfg.mode == PipelineMode.EXACT:
        SA = S.apply(transform.apply(accumulate_dense(stream)))
        return SA, None, 0
    sketch = MatrixProductSketch(
        S.materialize().T,
        transform,
        cfg.epsilon,
        cfg.delta,
        n_rows=d,
        layout="row_shared",
        capacity=cfg.budget,
        gamma=cfg.gamma,
        seed=cfg.seed + 1,
        settings=settings,
    )
    stream.transposed().replay(sketch.update_many)
    estimate = sketch.query()
    failed = int(estimate.failed[:, 0].sum())
    if failed == d:
        raise PipelineError("every design column failed at all levels", stage="regress")
    return estimate.values.T, sketch.space_report(), failed


def regress_solve(
    stream: UpdateStream,
    b: np.ndarray,
    cfg: RegressionConfig,
    settings: Optional[Settings] = None,
) -> RegressionResult:
    """Solve the sketched least-squares problem for the n x d streamed design.

    Raises:
        ConfigError: If d > n or the stream width differs from cfg.d
        DomainError: If b has the wrong length or non-finite entries
    """
    settings = settings or get_settings()
    n, d = stream.shape
    if d != cfg.d:
        raise ConfigError(f"stream has {d} columns but cfg.d={cfg.d}")
    if d > n:
        raise ConfigError(f"need n >= d, got n={n}, d={d}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,) or not np.all(np.isfinite(b)):
        raise DomainError(f"b must be a finite vector of length {n}")

    S = SketchTransform(cfg.transform_kind, rows=cfg.s, cols=n, seed=cfg.seed)
    logger.info(f"Regression: n={n}, d={d}, s={cfg.s}, S={cfg.transform_kind}, mode={cfg.mode.value}")
    SA, space, failed = sketch_design(stream, S, cfg, settings)
    Sb = S.apply(b)

    flags = []
    norm_scale = 1.0
    if cfg.normalize:
        norm_scale = float(linalg.norm(SA, 2)) or 1.0
        SA = SA / norm_scale
    x, _, rank, sigma = linalg.lstsq(SA, Sb)
    rank_deficient = rank < d or bool(sigma.size and sigma[-1] <= RANK_TOLERANCE * sigma[0])
    if rank_deficient:
        logger.warning(f"Regression: sketched design has rank {rank} < d={d}; returning the minimum-norm solution")
        flags.append("rank_deficient")
    if failed:
        flags.append("failed_columns")

    result = RegressionResult(
        x=x,
        rank_deficient=bool(rank_deficient),
        sketch_rows=cfg.s,
        norm_scale=norm_scale,
        sketched_residual=float(linalg.norm(SA @ x - Sb)),
        failed_columns=failed,
        flags=flags,
    )
    if space is not None:
        result.space = space
    return result
