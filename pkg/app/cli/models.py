"""
Records written by the evaluation commands.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field

CSV_SCHEMA = "fsketch-eval/1"
CSV_COLUMNS = (
    "dataset",
    "n",
    "k",
    "budget",
    "gamma",
    "variant",
    "seed",
    "space_ratio",
    "error_ratio",
    "baseline_error_ratio",
    "wall_ms",
)


class EvalRecord(BaseModel):
    """One evaluation row; seed is "mean" for the averaged row."""
    dataset: str
    n: int = Field(ge=1)
    k: int = Field(ge=1)
    budget: str = ""
    gamma: Optional[int] = None
    variant: str
    seed: Union[int, str]
    space_ratio: float = Field(ge=0)
    error_ratio: float
    baseline_error_ratio: Optional[float] = None
    wall_ms: float = Field(default=0.0, ge=0)


class Metrics12Norm(BaseModel):
    """||M||_{1,2} = sqrt(sum_j ||M[:, j]||_1^2)."""
    value: float = Field(ge=0)

    @classmethod
    def of(cls, M: np.ndarray) -> "Metrics12Norm":
        return cls(value=float(np.sqrt(np.sum(np.abs(M).sum(axis=0) ** 2))))


def norm_12(M: np.ndarray) -> float:
    return Metrics12Norm.of(M).value
