"""Multi-pass low-rank approximation of entrywise-transformed streamed matrices."""

from app.lowrank.models import (
    AdaptiveVariant,
    LowRankConfig,
    LowRankResult,
    PipelineMode,
    ProjectionEstimator,
    StageReport,
)
from app.lowrank.pipeline import (
    LowRankPipeline,
    extract_columns,
    lowrank_run,
    projection_estimate,
    stage1_leverage,
    stage2_adaptive,
    stage3_solve,
)

__all__ = [
    "AdaptiveVariant",
    "LowRankConfig",
    "LowRankPipeline",
    "LowRankResult",
    "PipelineMode",
    "ProjectionEstimator",
    "StageReport",
    "extract_columns",
    "lowrank_run",
    "projection_estimate",
    "stage1_leverage",
    "stage2_adaptive",
    "stage3_solve",
]
