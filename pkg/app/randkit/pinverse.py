"""
Sampler for the p-inverse distribution: Pr[z < x] = 1 - 1/x^p for x >= 1.

Draws are z = u^(-1/p) with u uniform in (0, 1] keyed by (seed, i, j), so
the implicit n x k table of draws is never stored.
"""

from __future__ import annotations

from typing import Union

import numpy as np

from app.errors import ConfigError
from app.randkit.hashing import keyed_uniform


class PInverseSampler:
    """Deterministic p-inverse draws indexed by coordinate pairs."""

    def __init__(self, seed: int, p: float):
        if not (0.0 < p <= 2.0):
            raise ConfigError(f"p must be in (0, 2], got {p}")
        self.seed = int(seed)
        self.p = float(p)

    def draw(self, i: Union[int, np.ndarray], j: Union[int, np.ndarray]) -> np.ndarray:
        """z(i, j) >= 1; broadcasts i against j."""
        u = keyed_uniform(self.seed, i, j)
        return u ** (-1.0 / self.p)


def pinverse_draw(sampler: PInverseSampler, i: int, j: int) -> float:
    """Scalar draw z(i, j) from the sampler."""
    return float(sampler.draw(i, j))
