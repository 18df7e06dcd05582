"""
Multi-pass rank-k approximation of M = f(A) for a stream-updated A.

Passes over a replayable stream (sketch mode):
    1. leverage sketch    E ~ R M with R = [S_+; S_-] for an oblivious S
    2. extraction         the d1 columns P sampled by the leverage scores of E
    3. adaptive sketch    Gamma ~ Q_p^T M and z ~ squared column norms of M
    4. extraction         the d2 columns sampled by the residual scores
    5. projection sketch  Pi ~ Q_y^T M; L = Q_y * top-k left vectors of Pi

All sketches run over the transposed stream, one levelled sample per
column of M, so Q and R enter only as query-time weights. Extracted
columns are exact: the extraction passes accumulate fixed-point sums.

Exact mode replaces every sketch with the dense product (one pass).

Usage:
    cfg = LowRankConfig(k=10, budget=40)
    result = lowrank_run(stream, cfg, Log1pPower())
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from app.config import Settings, get_settings
from app.densela import (
    SketchTransform,
    leverage_sample,
    leverage_scores,
    project_out,
    qr_basis,
    split_pos_neg,
    topk_svd,
    uniform_sample,
)
from app.errors import ConfigError, PipelineError
from app.fsketch.transforms import EntrywiseTransform
from app.lowrank.models import (
    AdaptiveVariant,
    LowRankConfig,
    LowRankResult,
    PipelineMode,
    ProjectionEstimator,
    StageReport,
)
from app.matprod import MatrixProductSketch, ProductEstimate, RowNormSketch
from app.streams.models import UpdateStream, accumulate_dense
from app.streams.numeric_guards import from_fixed_point, to_fixed_point

logger = logging.getLogger(__name__)

MIN_FIT_RATIO = 2


# =============================================================================
# Helpers
# =============================================================================

def projection_estimate(sketch: MatrixProductSketch, Q: np.ndarray, estimator: ProjectionEstimator) -> ProductEstimate:
    """Estimate f(A^T) Q from a row_shared sketch with weights Q.

    The regression estimator fits each sampled column onto Q restricted to
    its level's kept coordinates; levels keeping fewer than 2r coordinates
    fall back to the scaled estimate.
    """
    estimate = sketch.query()
    if estimator == ProjectionEstimator.SCALED:
        return estimate
    selection = sketch.last_selection
    samples = sketch.sample_matrix()
    values = estimate.values.copy()
    for level in np.unique(selection.level[selection.level >= 0]):
        group = np.flatnonzero(selection.level == level)
        kept = np.flatnonzero(sketch.grid.members[level])
        if kept.size < MIN_FIT_RATIO * Q.shape[1]:
            continue
        F = samples[group][:, kept].toarray().T * selection.prob[group]
        coef, *_ = linalg.lstsq(Q[kept], F)
        values[group] = coef.T
    return ProductEstimate(values=values, failed=estimate.failed)


def extract_columns(stream: UpdateStream, cols: np.ndarray, transform: EntrywiseTransform, scale: int) -> np.ndarray:
    """One pass accumulating A[:, cols] exactly in fixed point; returns f of those columns."""
    cols = np.asarray(cols, dtype=np.int64)
    position = np.full(stream.n_cols, -1, dtype=np.int64)
    position[cols] = np.arange(cols.size)
    sums = np.zeros((stream.n_rows, cols.size), dtype=np.int64)

    def consume(rows: np.ndarray, columns: np.ndarray, deltas: np.ndarray) -> None:
        slot = position[columns]
        keep = slot >= 0
        if keep.any():
            np.add.at(sums, (rows[keep], slot[keep]), to_fixed_point(deltas[keep], scale))

    stream.replay(consume)
    return transform.apply(from_fixed_point(sums, scale))


def orthonormal_padding(L: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Extend the orthonormal columns of L to k columns."""
    n, r = L.shape
    if r >= k:
        return L
    G = np.random.default_rng(seed).standard_normal((n, k - r))
    G = project_out(L, G)
    extra = qr_basis(G)
    return np.hstack([L, extra])[:, :k]


# =============================================================================
# Pipeline
# =============================================================================

class LowRankPipeline:
    """
    One run of the pipeline over a replayable stream.
    """

    def __init__(
        self,
        stream: UpdateStream,
        cfg: LowRankConfig,
        transform: EntrywiseTransform,
        column_weights: Optional[np.ndarray] = None,
        settings: Optional[Settings] = None,
    ):
        """
        Args:
            stream: Replayable stream of updates to A (n_rows x n_cols)
            cfg: Pipeline parameters
            transform: Entrywise f
            column_weights: Optional w, approximating M = f(A) diag(w)

        Raises:
            ConfigError: If the stream is one-shot, the weights have the
                wrong shape, or k exceeds the matrix dimensions
        """
        self.settings = settings or get_settings()
        if not stream.replayable:
            raise ConfigError("the low-rank pipeline needs a replayable stream (several passes)")
        self.stream = stream
        self.cfg = cfg
        self.transform = transform
        self.n_rows, self.n_cols = stream.shape
        if cfg.k > min(self.n_rows, self.n_cols):
            raise ConfigError(f"k={cfg.k} exceeds the matrix dimensions {self.n_rows}x{self.n_cols}")
        if column_weights is None:
            self.weights = np.ones(self.n_cols)
        else:
            self.weights = np.asarray(column_weights, dtype=np.float64)
            if self.weights.shape != (self.n_cols,) or np.any(self.weights <= 0):
                raise ConfigError(f"column_weights must be {self.n_cols} positive values")
        self.scale = self.settings.fixed_point_scale
        self.word_bytes = self.settings.word_bytes
        seeds = np.random.default_rng(cfg.seed).integers(0, 2 ** 31, size=8)
        self._seeds = {
            name: int(value)
            for name, value in zip(
                ("transform", "leverage", "sketch1", "adaptive", "sketch3", "rownorm", "sketch5", "padding"), seeds
            )
        }

        self.stages: List[StageReport] = []
        self.flags: List[str] = []
        self.masks: Dict[str, np.ndarray] = {}
        self.columns: Dict[int, np.ndarray] = {}
        self.M: Optional[np.ndarray] = None
        self.P: np.ndarray = np.zeros(0, dtype=np.int64)
        self.Y: np.ndarray = np.zeros(0, dtype=np.int64)
        self._z: Optional[np.ndarray] = None
        self._Pi: Optional[np.ndarray] = None
        self._W: Optional[np.ndarray] = None

    @property
    def exact(self) -> bool:
        return self.cfg.mode == PipelineMode.EXACT

    # -------------------------------------------------------------------------
    # Stream access
    # -------------------------------------------------------------------------

    def _sketch(self, B: np.ndarray, seed_name: str) -> MatrixProductSketch:
        return MatrixProductSketch(
            B,
            self.transform,
            self.cfg.epsilon,
            self.cfg.delta,
            n_rows=self.n_cols,
            layout="row_shared",
            capacity=self.cfg.budget,
            gamma=self.cfg.gamma,
            seed=self._seeds[seed_name],
            settings=self.settings,
        )

    def _sketch_pass(self, sketches: list) -> None:
        """One pass of the transposed stream into every sketch."""
        def consume(rows: np.ndarray, cols: np.ndarray, deltas: np.ndarray) -> None:
            for sketch in sketches:
                sketch.update_many(rows, cols, deltas)

        self.stream.transposed().replay(consume)

    def _extract(self, wanted: np.ndarray) -> None:
        """Exact weighted columns f(A[:, c]) * w_c for every c in wanted not yet held."""
        new = np.setdiff1d(wanted, np.fromiter(self.columns.keys(), dtype=np.int64))
        if self.exact:
            for c in new:
                self.columns[int(c)] = self.M[:, c]
            return
        values = extract_columns(self.stream, new, self.transform, self.scale) * self.weights[new]
        for index, c in enumerate(new):
            self.columns[int(c)] = values[:, index]

    def _held(self, cols: np.ndarray) -> np.ndarray:
        if cols.size == 0:
            return np.zeros((self.n_rows, 0))
        return np.column_stack([self.columns[int(c)] for c in cols])

    def _dense_bytes(self) -> int:
        return len(self.columns) * self.n_rows * self.word_bytes

    def _check_failures(self, stage: str, estimate: ProductEstimate) -> int:
        failed_rows = estimate.failed if estimate.failed.ndim == 1 else estimate.failed.any(axis=1)
        if failed_rows.size and failed_rows.all():
            raise PipelineError("every sketched column failed at all levels", stage=stage)
        self.masks[stage] = failed_rows
        return int(failed_rows.sum())

    # -------------------------------------------------------------------------
    # Stages
    # -------------------------------------------------------------------------

    def stage1_leverage(self) -> np.ndarray:
        """Sample d1 columns by the leverage scores of E ~ R M and extract them."""
        cfg = self.cfg
        S = SketchTransform(cfg.transform_kind, rows=cfg.s, cols=self.n_rows, seed=self._seeds["transform"])
        R = split_pos_neg(S.materialize())

        report = StageReport(stage="leverage")
        if self.exact:
            E = R @ self.M
        else:
            sketch = self._sketch(R.T, "sketch1")
            self._sketch_pass([sketch])
            estimate = sketch.query()
            report.failed_cells = self._check_failures("leverage", estimate)
            report.sketch_space = sketch.space_report()
            E = (estimate.values * self.weights[:, None]).T
        self.stages.append(report)
        logger.info(f"Stage 1: leverage sketch E is {E.shape[0]}x{E.shape[1]}")

        scores = leverage_scores(E)
        if scores.rank == 0:
            logger.warning("Stage 1: sketch E is zero, sampling columns uniformly")
            self.flags.append("leverage_uniform_fallback")
            sample = uniform_sample(self.n_cols, cfg.d1, seed=self._seeds["leverage"])
        else:
            sample = leverage_sample(scores.distribution, cfg.d1, seed=self._seeds["leverage"])
        self.P = np.unique(sample.indices)

        self._extract(self.P)
        self.stages.append(StageReport(stage="extract_p", dense_bytes=self._dense_bytes()))
        logger.info(f"Stage 1: extracted {self.P.size} distinct columns")
        return self.P

    def _residual_scores(self, Q_p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(z, s): squared column norms of M and their squared distance to span(Q_p)."""
        report = StageReport(stage="adaptive", dense_bytes=self._dense_bytes())
        if self.exact:
            z = np.sum(self.M ** 2, axis=0)
            gamma = Q_p.T @ self.M
            residual = z - np.sum(gamma ** 2, axis=0)
            self.stages.append(report)
            return z, residual

        # An empty basis still needs one weight column; its estimate is zero.
        sketch = self._sketch(Q_p if Q_p.shape[1] else np.zeros((self.n_rows, 1)), "sketch3")
        sketches = [sketch]
        norm_sketch = None
        if not self.cfg.share_row_norm_sample:
            norm_sketch = RowNormSketch(
                self.transform,
                self.n_rows,
                self.cfg.epsilon,
                self.cfg.delta,
                n_rows=self.n_cols,
                layout="row_shared",
                capacity=self.cfg.budget,
                gamma=self.cfg.gamma,
                seed=self._seeds["rownorm"],
                settings=self.settings,
            )
            sketches.append(norm_sketch.inner)
        self._sketch_pass(sketches)

        gamma = projection_estimate(sketch, Q_p, self.cfg.projection_estimator)
        norms = sketch.squared_row_sums() if norm_sketch is None else norm_sketch.query()
        report.failed_cells = self._check_failures("adaptive", gamma)
        report.sketch_space = sketch.space_report()
        if norm_sketch is not None:
            report.sketch_space = report.sketch_space + norm_sketch.space_report()
        self.stages.append(report)

        w = self.weights
        z = norms.values * w ** 2
        G = gamma.values * w[:, None]
        residual = z - np.sum(G ** 2, axis=1)
        residual[self.P] = 0.0
        return z, residual

    def stage2_adaptive(self) -> np.ndarray:
        """Sample d2 more columns by residual scores; Y = P plus the new columns."""
        cfg = self.cfg
        if self.P.size == 0:
            raise PipelineError("no columns sampled in the leverage stage", stage="adaptive")
        Q_p = qr_basis(self._held(self.P))
        z, residual = self._residual_scores(Q_p)
        self._z = z
        scores = np.maximum(residual, 0.0)
        if cfg.adaptive_variant == AdaptiveVariant.THRESHOLDED_ETA:
            dist = np.maximum(scores, cfg.eta * np.maximum(z, 0.0))
        else:
            dist = scores + scores.sum() / self.n_cols
        if not np.any(dist > 0):
            logger.warning("Stage 2: all residual scores are zero, sampling columns uniformly")
            self.flags.append("adaptive_uniform_fallback")
            sample = uniform_sample(self.n_cols, cfg.d2, seed=self._seeds["adaptive"])
        else:
            sample = leverage_sample(dist, cfg.d2, seed=self._seeds["adaptive"])
        self.Y = np.union1d(self.P, sample.indices)

        self._extract(self.Y)
        self.stages.append(StageReport(stage="extract_y", dense_bytes=self._dense_bytes()))
        logger.info(f"Stage 2: Y holds {self.Y.size} distinct columns")
        return self.Y

    def stage3_solve(self) -> np.ndarray:
        """L = Q_y times the top-k left singular vectors of Pi ~ Q_y^T M."""
        k = self.cfg.k
        if self.Y.size == 0:
            raise PipelineError("no columns available for the projection stage", stage="solve")
        Q_y = qr_basis(self._held(self.Y))
        rank = Q_y.shape[1]
        report = StageReport(stage="solve", dense_bytes=self._dense_bytes())
        if self.exact:
            Pi = Q_y.T @ self.M
        else:
            sketch = self._sketch(Q_y if rank else np.zeros((self.n_rows, 1)), "sketch5")
            self._sketch_pass([sketch])
            estimate = projection_estimate(sketch, Q_y, self.cfg.projection_estimator)
            report.failed_cells = self._check_failures("solve", estimate)
            report.sketch_space = sketch.space_report()
            Pi = (estimate.values * self.weights[:, None]).T[:rank]
            Pi[:, self.Y] = Q_y.T @ self._held(self.Y)
        self.stages.append(report)

        if rank == 0:
            W = np.zeros((0, 0))
            L = np.zeros((self.n_rows, 0))
        else:
            W, _ = topk_svd(Pi, min(k, rank))
            L = Q_y @ W
        if L.shape[1] < k:
            logger.warning(f"Stage 3: span of Y has rank {rank} < k={k}, padding L")
            self.flags.append("rank_padding")
            L = orthonormal_padding(L, k, self._seeds["padding"])
        L, _ = linalg.qr(L, mode="economic")
        self._Pi, self._W = Pi, W
        return L

    def estimated_residual(self) -> Optional[float]:
        """sqrt(sum z - ||W^T Pi||_F^2), the residual implied by the sketched quantities."""
        if self._z is None or self._W is None:
            return None
        captured = float(np.sum((self._W.T @ self._Pi) ** 2)) if self._W.size else 0.0
        return float(np.sqrt(max(float(self._z.sum()) - captured, 0.0)))

    # -------------------------------------------------------------------------
    # Run
    # -------------------------------------------------------------------------

    def run(self) -> LowRankResult:
        passes_before = self.stream.passes
        if self.exact:
            self.M = accumulate_dense(self.stream)
            self.M = self.transform.apply(self.M) * self.weights
            self.stages.append(StageReport(stage="dense", dense_bytes=self.M.size * self.word_bytes))

        logger.info(
            f"Low-rank run: {self.n_rows}x{self.n_cols}, k={self.cfg.k}, s={self.cfg.s}, "
            f"d1={self.cfg.d1}, d2={self.cfg.d2}, mode={self.cfg.mode.value}"
        )
        self.stage1_leverage()
        self.stage2_adaptive()
        L = self.stage3_solve()

        if self.exact:
            residual = float(np.linalg.norm(project_out(L, self.M)))
        else:
            residual = self.estimated_residual()
        pass_count = self.stream.passes - passes_before
        logger.info(f"Low-rank run finished in {pass_count} passes, flags={self.flags or 'none'}")
        return LowRankResult(
            L=L,
            residual_fro=residual,
            stages=self.stages,
            pass_count=pass_count,
            masks=self.masks,
            flags=self.flags,
            sampled_columns=self.Y,
        )


# =============================================================================
# Operations
# =============================================================================

def lowrank_run(
    stream: UpdateStream,
    cfg: LowRankConfig,
    f: EntrywiseTransform,
    column_weights: Optional[np.ndarray] = None,
    settings: Optional[Settings] = None,
) -> LowRankResult:
    return LowRankPipeline(stream, cfg, f, column_weights=column_weights, settings=settings).run()


def stage1_leverage(pipeline: LowRankPipeline) -> np.ndarray:
    return pipeline.stage1_leverage()


def stage2_adaptive(pipeline: LowRankPipeline) -> np.ndarray:
    return pipeline.stage2_adaptive()


def stage3_solve(pipeline: LowRankPipeline) -> np.ndarray:
    return pipeline.stage3_solve()
