"""
Importance sampling of column indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.errors import DomainError


@dataclass
class SampledIndices:
    indices: np.ndarray
    rescale: np.ndarray
    probabilities: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.size)


def normalize_distribution(q: np.ndarray) -> np.ndarray:
    """q / sum(q).

    Raises:
        DomainError: On negative, non-finite or all-zero q
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise DomainError("distribution must be a non-empty vector")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise DomainError("distribution entries must be finite and nonnegative")
    total = q.sum()
    if total <= 0:
        raise DomainError("distribution is identically zero")
    return q / total


def leverage_sample(q: np.ndarray, s: int, seed: int = 0) -> SampledIndices:
    """Draw s indices i.i.d. with replacement from q; rescale_j = 1 / sqrt(q_i s)."""
    if s < 1:
        raise DomainError(f"sample size must be >= 1, got {s}")
    dist = normalize_distribution(q)
    rng = np.random.default_rng(seed)
    indices = rng.choice(dist.size, size=int(s), replace=True, p=dist)
    return SampledIndices(
        indices=indices.astype(np.int64),
        rescale=1.0 / np.sqrt(dist[indices] * s),
        probabilities=dist,
    )


def uniform_sample(n: int, s: int, seed: int = 0) -> SampledIndices:
    return leverage_sample(np.ones(n), s, seed)
