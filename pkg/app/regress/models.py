"""
Parameters and results for sketch-and-solve regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from app.errors import ConfigError
from app.lowrank.models import PipelineMode
from app.matprod import SpaceReport


class RegressionConfig(BaseModel):
    """s defaults to max(d, ceil(c_r d^2 / eps^2))."""
    d: int = Field(ge=1)
    epsilon: float = Field(default=0.25, gt=0, lt=1)
    delta: float = Field(default=0.1, gt=0, lt=1)
    c_r: float = Field(default=4.0, gt=0)
    sketch_rows: Optional[int] = Field(default=None, ge=1)
    transform_kind: str = "gaussian"
    transform: str = "log1p"
    budget: Optional[int] = Field(default=None, ge=1)
    gamma: Optional[float] = Field(default=None, gt=0)
    normalize: bool = False
    mode: PipelineMode = PipelineMode.SKETCH
    seed: int = 0

    @field_validator("transform_kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in ("gaussian", "countsketch"):
            raise ValueError(f"transform_kind must be gaussian or countsketch, got '{value}'")
        return value

    @classmethod
    def build(cls, **kwargs) -> "RegressionConfig":
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ConfigError(f"Invalid regression config: {e}") from e

    @property
    def s(self) -> int:
        if self.sketch_rows is not None:
            return max(self.d, self.sketch_rows)
        return max(self.d, math.ceil(self.c_r * self.d ** 2 / self.epsilon ** 2))


@dataclass
class RegressionResult:
    x: np.ndarray
    rank_deficient: bool
    sketch_rows: int
    norm_scale: float = 1.0
    sketched_residual: float = 0.0
    space: SpaceReport = field(default_factory=SpaceReport)
    failed_columns: int = 0
    flags: List[str] = field(default_factory=list)
