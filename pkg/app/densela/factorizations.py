"""
Dense factorizations for the pipelines: rank-revealing QR, truncated SVD,
leverage scores and numerical rank.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from app.errors import DomainError

logger = logging.getLogger(__name__)

QR_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-8


@dataclass
class LeverageScores:
    """Column leverage scores of E (squared row norms of V in E = U S V^T)."""
    scores: np.ndarray
    rank: int

    @property
    def distribution(self) -> np.ndarray:
        return self.scores / self.scores.sum() if self.rank else self.scores


def qr_basis(Y: np.ndarray, tol: float = QR_TOLERANCE) -> np.ndarray:
    """Orthonormal basis of span(Y), truncated at the numerical rank.

    Uses column-pivoted QR; columns whose |R_ii| fall below tol * |R_00|
    are dropped.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise DomainError(f"qr_basis expects a matrix, got shape {Y.shape}")
    if Y.size == 0 or not np.any(Y):
        return np.zeros((Y.shape[0], 0))
    Q, R, _ = linalg.qr(Y, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * diag[0]))
    return Q[:, :rank]


def topk_svd(M: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top-k left singular vectors and values of M.

    Raises:
        DomainError: If k exceeds min(M.shape) or is not positive
    """
    M = np.asarray(M, dtype=np.float64)
    if k < 1 or k > min(M.shape):
        raise DomainError(f"k must be in [1, {min(M.shape)}], got {k}")
    U, sigma, _ = linalg.svd(M, full_matrices=False)
    return U[:, :k], sigma[:k]


def leverage_scores(E: np.ndarray, tol: float = RANK_TOLERANCE) -> LeverageScores:
    """Leverage score of every column of E; they sum to rank(E)."""
    E = np.asarray(E, dtype=np.float64)
    if not np.any(E):
        return LeverageScores(scores=np.zeros(E.shape[1]), rank=0)
    _, sigma, Vt = linalg.svd(E, full_matrices=False)
    rank = int(np.sum(sigma > tol * sigma[0]))
    scores = np.sum(Vt[:rank] ** 2, axis=0)
    return LeverageScores(scores=np.clip(scores, 0.0, 1.0), rank=rank)


def rank_of(M: np.ndarray, tol: float = RANK_TOLERANCE) -> int:
    """Number of singular values above tol * sigma_max (0 for the zero matrix)."""
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0 or not np.any(M):
        return 0
    sigma = linalg.svdvals(M)
    return int(np.sum(sigma > tol * sigma[0]))


def project_out(Q: np.ndarray, M: np.ndarray) -> np.ndarray:
    """M - Q Q^T M for orthonormal Q."""
    return M - Q @ (Q.T @ M)
