"""
Oblivious sketching transforms S (rows x cols) applied to dense matrices.

Kinds:
- countsketch                one +/-1 per column in a uniformly chosen row
- gaussian                   i.i.d. N(0, 1) / sqrt(rows)
- countsketch_then_gaussian  gaussian (rows x inner) times countsketch (inner x cols)
- srht                       sqrt(N/rows) * sampled rows of H D / sqrt(N), N = next power of two

Transforms are seeded and never stored densely unless `materialize` is called.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from app.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

TRANSFORM_KINDS = ("countsketch", "gaussian", "countsketch_then_gaussian", "srht")
INNER_FACTOR = 4


def _countsketch_matrix(rows: int, cols: int, rng: np.random.Generator) -> sparse.csr_matrix:
    buckets = rng.integers(0, rows, size=cols)
    signs = rng.choice(np.array([-1.0, 1.0]), size=cols)
    return sparse.csr_matrix((signs, (buckets, np.arange(cols))), shape=(rows, cols))


def fwht(M: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0 (length must be a power of two)."""
    out = np.array(M, dtype=np.float64, copy=True)
    n = out.shape[0]
    if n & (n - 1):
        raise DomainError(f"fwht needs a power-of-two length, got {n}")
    tail = out.shape[1:]
    h = 1
    while h < n:
        view = out.reshape((n // (2 * h), 2, h) + tail)
        top = view[:, 0].copy()
        view[:, 0] += view[:, 1]
        view[:, 1] = top - view[:, 1]
        h *= 2
    return out


@dataclass
class SketchTransform:
    kind: str
    rows: int
    cols: int
    seed: int = 0
    _countsketch: Optional[sparse.csr_matrix] = field(default=None, init=False, repr=False)
    _gaussian: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _signs: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _sampled_rows: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ConfigError(f"transform kind must be one of {TRANSFORM_KINDS}, got '{self.kind}'")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"transform shape must be positive, got {self.rows}x{self.cols}")
        rng = np.random.default_rng(self.seed)
        if self.kind == "countsketch":
            self._countsketch = _countsketch_matrix(self.rows, self.cols, rng)
        elif self.kind == "gaussian":
            self._gaussian = rng.standard_normal((self.rows, self.cols)) / np.sqrt(self.rows)
        elif self.kind == "countsketch_then_gaussian":
            inner = min(self.cols, INNER_FACTOR * self.rows)
            self._countsketch = _countsketch_matrix(inner, self.cols, rng)
            self._gaussian = rng.standard_normal((self.rows, inner)) / np.sqrt(self.rows)
        else:
            padded = self.padded_cols
            if self.rows > padded:
                raise ConfigError(f"srht needs rows <= {padded}, got {self.rows}")
            self._signs = rng.choice(np.array([-1.0, 1.0]), size=padded)
            self._sampled_rows = np.sort(rng.choice(padded, size=self.rows, replace=False))

    @property
    def padded_cols(self) -> int:
        return 1 << max(0, int(self.cols - 1).bit_length())

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    def apply(self, M: np.ndarray) -> np.ndarray:
        """S @ M for M with `cols` rows (a vector is treated as one column)."""
        M = np.asarray(M, dtype=np.float64)
        vector = M.ndim == 1
        if vector:
            M = M[:, None]
        if M.shape[0] != self.cols:
            raise DomainError(f"transform expects {self.cols} rows, got {M.shape[0]}")

        if self.kind == "countsketch":
            out = np.asarray(self._countsketch @ M)
        elif self.kind == "gaussian":
            out = self._gaussian @ M
        elif self.kind == "countsketch_then_gaussian":
            out = self._gaussian @ np.asarray(self._countsketch @ M)
        else:
            padded = np.zeros((self.padded_cols, M.shape[1]))
            padded[: self.cols] = M * self._signs[: self.cols, None]
            mixed = fwht(padded)[self._sampled_rows]
            out = mixed / np.sqrt(self.rows)
        return out[:, 0] if vector else out

    def materialize(self) -> np.ndarray:
        """Dense S, for small shapes and tests."""
        return self.apply(np.eye(self.cols))


def apply_transform(T: SketchTransform, M: np.ndarray) -> np.ndarray:
    return T.apply(M)


def split_pos_neg(S: np.ndarray) -> np.ndarray:
    """R = [S_+; S_-] so that S = S_+ - S_- and both parts are nonnegative."""
    S = np.asarray(S, dtype=np.float64)
    return np.vstack([np.maximum(S, 0.0), np.maximum(-S, 0.0)])
