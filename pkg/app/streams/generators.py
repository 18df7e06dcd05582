"""
Synthetic data generators.

- LOGDATA: Gaussian M with column i scaled to norm 4/i, A = exp(M) - 1
  (or exp(M) with variant="exp"), each entry split into 5 equal updates
- SQDATA: same M, A = M^2
- Rank fixtures: Vandermonde and block-diagonal matrices with their
  entrywise logs, and exact low-rank matrices for end-to-end checks

Entries are quantized to the fixed-point grid before splitting, so
accumulating the stream reproduces the returned A exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.errors import ConfigError, DomainError
from app.streams.models import MemoryStream
from app.streams.numeric_guards import DEFAULT_FIXED_POINT_SCALE

logger = logging.getLogger(__name__)

UPDATES_PER_ENTRY = 5
LOGDATA_VARIANTS = ("expm1", "exp")
LOWRANK_KINDS = ("pow1", "log1p")


@dataclass
class GeneratedData:
    """A generated stream with the dense matrix it accumulates to and its latent M."""
    stream: MemoryStream
    A: np.ndarray
    M: Optional[np.ndarray] = None


def stream_from_dense(
    A: np.ndarray,
    updates_per_entry: int = UPDATES_PER_ENTRY,
    seed: int = 0,
    scale: int = DEFAULT_FIXED_POINT_SCALE,
) -> Tuple[MemoryStream, np.ndarray]:
    """Split every nonzero A_ij into equal fixed-point updates in seeded order.

    Returns the stream and the quantized matrix it accumulates to.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DomainError(f"expected a matrix, got shape {A.shape}")
    if updates_per_entry < 1:
        raise ConfigError(f"updates_per_entry must be >= 1, got {updates_per_entry}")
    rows, cols = np.nonzero(A)
    steps = np.rint(A[rows, cols] * scale / updates_per_entry).astype(np.int64)
    steps[steps == 0] = np.where(A[rows, cols][steps == 0] < 0, -1, 1)

    quantized = np.zeros_like(A)
    quantized[rows, cols] = steps * updates_per_entry / scale

    order = np.random.default_rng(seed).permutation(rows.size * updates_per_entry)
    all_rows = np.tile(rows, updates_per_entry)[order]
    all_cols = np.tile(cols, updates_per_entry)[order]
    all_deltas = (np.tile(steps, updates_per_entry) / scale)[order]
    return MemoryStream(all_rows, all_cols, all_deltas, A.shape[0], A.shape[1]), quantized


def latent_gaussian(n: int, seed: int) -> np.ndarray:
    """n x n Gaussian matrix whose column i (1-based) has norm 4 / i."""
    if n < 2:
        raise ConfigError(f"n must be >= 2, got {n}")
    M = np.random.default_rng(seed).standard_normal((n, n))
    M *= (4.0 / np.arange(1, n + 1)) / np.linalg.norm(M, axis=0)
    return M


def gen_logdata(n: int, seed: int = 0, variant: str = "expm1", scale: int = DEFAULT_FIXED_POINT_SCALE) -> GeneratedData:
    if variant not in LOGDATA_VARIANTS:
        raise ConfigError(f"LOGDATA variant must be one of {LOGDATA_VARIANTS}, got '{variant}'")
    M = latent_gaussian(n, seed)
    A = np.expm1(M) if variant == "expm1" else np.exp(M)
    stream, quantized = stream_from_dense(A, seed=seed + 1, scale=scale)
    logger.info(f"Generated LOGDATA n={n} seed={seed} variant={variant}: {len(stream)} updates")
    return GeneratedData(stream=stream, A=quantized, M=M)


def gen_sqdata(n: int, seed: int = 0, scale: int = DEFAULT_FIXED_POINT_SCALE) -> GeneratedData:
    M = latent_gaussian(n, seed)
    stream, quantized = stream_from_dense(M ** 2, seed=seed + 1, scale=scale)
    logger.info(f"Generated SQDATA n={n} seed={seed}: {len(stream)} updates")
    return GeneratedData(stream=stream, A=quantized, M=M)


# =============================================================================
# Rank fixtures
# =============================================================================

def entrywise_log(A: np.ndarray, base: Optional[float] = None) -> np.ndarray:
    """log of the nonzero entries of A (zeros stay zero)."""
    A = np.asarray(A, dtype=np.float64)
    out = np.zeros_like(A)
    nonzero = A != 0
    out[nonzero] = np.log(np.abs(A[nonzero]))
    if base is not None:
        out /= np.log(base)
    return out


def gen_vandermonde_fixture(n: int, alphas: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """A_ij = alpha_i^j (j from 0) and its entrywise log, which has rank 1.

    Raises:
        DomainError: On duplicate or nonpositive alphas, or len(alphas) != n
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size != n:
        raise DomainError(f"need {n} alphas, got {alphas.size}")
    if np.any(alphas <= 0):
        raise DomainError("alphas must be positive")
    if np.unique(alphas).size != alphas.size:
        raise DomainError("alphas must be pairwise distinct")
    A = np.vander(alphas, n, increasing=True)
    return A, entrywise_log(A)


BLOCK = np.array([[1.0, 2.0], [2.0, 4.0]])


def gen_block_fixture(n: int, base: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """n/2 copies of [[1, 2], [2, 4]] on the diagonal: rank n/2, entrywise log has rank n."""
    if n < 2 or n % 2:
        raise DomainError(f"block fixture needs an even n >= 2, got {n}")
    A = np.kron(np.eye(n // 2), BLOCK)
    return A, entrywise_log(A, base=base)


def gen_lowrank_fixture(n: int, rank: int, seed: int = 0, kind: str = "pow1") -> np.ndarray:
    """Matrix A whose transformed f(A) has exact rank `rank`.

    kind="pow1": nonnegative integer U V^T, for f = |x|.
    kind="log1p": expm1 of a nonnegative rank-`rank` matrix, for f = log(|x| + 1).
    """
    if kind not in LOWRANK_KINDS:
        raise ConfigError(f"kind must be one of {LOWRANK_KINDS}, got '{kind}'")
    if not 1 <= rank <= n:
        raise ConfigError(f"rank must be in [1, {n}], got {rank}")
    rng = np.random.default_rng(seed)
    if kind == "pow1":
        U = rng.integers(0, 4, size=(n, rank))
        V = rng.integers(0, 4, size=(n, rank))
        return (U @ V.T).astype(np.float64)
    U = rng.random((n, rank))
    V = rng.random((n, rank))
    return np.expm1(U @ V.T / rank)
