"""Dense linear algebra for the low-rank and regression pipelines."""

from app.densela.factorizations import (
    LeverageScores,
    leverage_scores,
    project_out,
    qr_basis,
    rank_of,
    topk_svd,
)
from app.densela.sampling import SampledIndices, leverage_sample, normalize_distribution, uniform_sample
from app.densela.transforms import TRANSFORM_KINDS, SketchTransform, apply_transform, fwht, split_pos_neg

__all__ = [
    "LeverageScores",
    "SampledIndices",
    "SketchTransform",
    "TRANSFORM_KINDS",
    "apply_transform",
    "fwht",
    "leverage_sample",
    "leverage_scores",
    "normalize_distribution",
    "project_out",
    "qr_basis",
    "rank_of",
    "split_pos_neg",
    "topk_svd",
    "uniform_sample",
]
