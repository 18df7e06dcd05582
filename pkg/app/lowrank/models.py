"""
Parameters and results of the multi-pass low-rank pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from app.errors import ConfigError
from app.matprod import SpaceReport


# =============================================================================
# Enums
# =============================================================================

class AdaptiveVariant(str, Enum):
    """Sampling distribution for the adaptive stage."""
    THRESHOLDED_ETA = "thresholded_eta"   # p_i = max(s_i, eta * z_i)
    EXPERIMENTAL_QI = "experimental_qi"   # q_i = max(s_i, 0), p_i = q_i + sum(q) / n


class ProjectionEstimator(str, Enum):
    SCALED = "scaled"          # sum of sampled f / p weighted by Q
    REGRESSION = "regression"  # least-squares fit of the sampled level onto Q


class PipelineMode(str, Enum):
    SKETCH = "sketch"
    EXACT = "exact"   # dense products instead of sketches


# =============================================================================
# Config
# =============================================================================

class LowRankConfig(BaseModel):
    """Rank-k pipeline parameters.

    Sizes default to s = c_s k log k, d1 = c_1 k log^2 k, d2 = c_2 k / eps
    (each at least k). `sample_size` sets s = d1 = d2 at once; `budget`
    is the K-Set capacity per sketched column.
    """
    k: int = Field(ge=1)
    epsilon: float = Field(default=0.25, gt=0, lt=1)
    delta: float = Field(default=0.1, gt=0, lt=1)
    c_s: float = Field(default=1.0, gt=0)
    c_1: float = Field(default=1.0, gt=0)
    c_2: float = Field(default=1.0, gt=0)
    c_eta: float = Field(default=1.0, ge=0)
    sample_size: Optional[int] = Field(default=None, ge=1)
    budget: Optional[int] = Field(default=None, ge=1)
    gamma: Optional[float] = Field(default=None, gt=0)
    adaptive_variant: AdaptiveVariant = AdaptiveVariant.EXPERIMENTAL_QI
    transform_kind: str = "countsketch"
    projection_estimator: ProjectionEstimator = ProjectionEstimator.SCALED
    share_row_norm_sample: bool = True
    mode: PipelineMode = PipelineMode.SKETCH
    seed: int = 0

    @model_validator(mode="after")
    def _check_transform(self) -> "LowRankConfig":
        if self.transform_kind == "fjlt":
            self.transform_kind = "srht"
        if self.transform_kind not in ("countsketch", "srht"):
            raise ValueError(f"transform_kind must be countsketch or fjlt, got '{self.transform_kind}'")
        return self

    @classmethod
    def build(cls, **kwargs) -> "LowRankConfig":
        """Construct, turning validation errors into ConfigError."""
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ConfigError(f"Invalid low-rank config: {e}") from e

    @property
    def _log_k(self) -> float:
        return math.log2(self.k) if self.k > 1 else 0.0

    @property
    def s(self) -> int:
        if self.sample_size is not None:
            return max(self.k, self.sample_size)
        return max(self.k, math.ceil(self.c_s * self.k * self._log_k))

    @property
    def d1(self) -> int:
        if self.sample_size is not None:
            return max(self.k, self.sample_size)
        return max(self.k, math.ceil(self.c_1 * self.k * self._log_k ** 2))

    @property
    def d2(self) -> int:
        if self.sample_size is not None:
            return max(self.k, self.sample_size)
        return max(self.k, math.ceil(self.c_2 * self.k / self.epsilon))

    @property
    def eta(self) -> float:
        return self.c_eta * (self.epsilon * math.sqrt(self.d1) + self.epsilon ** 2 * self.d1)


# =============================================================================
# Results
# =============================================================================

@dataclass
class StageReport:
    """Space and failure diagnostics for one stream pass."""
    stage: str
    sketch_space: SpaceReport = field(default_factory=SpaceReport)
    dense_bytes: int = 0
    failed_cells: int = 0

    @property
    def allocated_total(self) -> int:
        """Bytes actually held during the pass: sketch payload plus dense buffers."""
        return self.sketch_space.allocated_bytes + self.dense_bytes

    @property
    def nominal_total(self) -> int:
        """Expected sample payload plus dense buffers."""
        return self.sketch_space.nominal_bytes + self.dense_bytes


@dataclass
class LowRankResult:
    L: np.ndarray
    residual_fro: Optional[float]
    stages: List[StageReport]
    pass_count: int
    masks: Dict[str, np.ndarray] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    sampled_columns: Optional[np.ndarray] = None

    @property
    def peak_space_bytes(self) -> int:
        return max((stage.allocated_total for stage in self.stages), default=0)

    @property
    def peak_nominal_bytes(self) -> int:
        return max((stage.nominal_total for stage in self.stages), default=0)

    @property
    def space_report(self) -> Dict[str, int]:
        return {stage.stage: stage.allocated_total for stage in self.stages}
