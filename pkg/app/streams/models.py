"""
Update-stream data model.

An update stream is a sequence of turnstile updates (row, col, delta) to a
hidden n_rows x n_cols matrix A. Streams are replayed in chunks of parallel
arrays; every replay bumps a pass counter so multi-pass pipelines can report
how many passes they really made.
"""

from __future__ import annotations

import hashlib
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterator, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.errors import ConfigError, DomainError
from app.streams.numeric_guards import check_deltas, check_indices

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 1 << 16

_RECORD_DTYPE = np.dtype([("row", "<i8"), ("col", "<i8"), ("delta", "<f8")])


# =============================================================================
# Models
# =============================================================================

class ValueEncoding(IntEnum):
    """How update values are stored on disk."""
    SIGN = 0    # delta in {-1, +1}
    FIXED = 1   # delta * scale as a zigzag varint


class UpdateEvent(BaseModel):
    """One turnstile update A[row, col] += delta."""
    row: int = Field(ge=0)
    col: int = Field(ge=0)
    delta: float

    @field_validator("delta")
    @classmethod
    def _finite_nonzero(cls, value: float) -> float:
        if not math.isfinite(value) or value == 0:
            raise ValueError("delta must be finite and nonzero")
        return value


class StreamHeader(BaseModel):
    n_rows: int = Field(ge=1)
    n_cols: int = Field(ge=1)
    m: int = Field(ge=0)
    encoding: ValueEncoding = ValueEncoding.FIXED
    scale: int = Field(default=1 << 20, ge=1)


@dataclass
class EventChunk:
    rows: np.ndarray
    cols: np.ndarray
    deltas: np.ndarray

    def __len__(self) -> int:
        return int(self.rows.size)

    def records(self) -> np.ndarray:
        out = np.empty(len(self), dtype=_RECORD_DTYPE)
        out["row"] = self.rows
        out["col"] = self.cols
        out["delta"] = self.deltas
        return out


@dataclass
class PassStats:
    """Result of one replay: event count and a checksum of the event sequence."""
    count: int
    sha256: str


ChunkConsumer = Callable[[np.ndarray, np.ndarray, np.ndarray], None]


# =============================================================================
# Streams
# =============================================================================

class UpdateStream(ABC):
    """Replayable source of update chunks."""

    replayable = True

    def __init__(self, n_rows: int, n_cols: int):
        if n_rows < 1 or n_cols < 1:
            raise ConfigError(f"stream shape must be positive, got {n_rows}x{n_cols}")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.passes = 0

    @property
    def shape(self) -> tuple:
        return (self.n_rows, self.n_cols)

    @abstractmethod
    def _chunks(self) -> Iterator[EventChunk]:
        ...

    def replay_chunks(self) -> Iterator[EventChunk]:
        """Start a pass over the stream.

        Raises:
            ConfigError: If the stream cannot be replayed again
        """
        if not self.replayable and self.passes >= 1:
            raise ConfigError("stream is one-shot and was already consumed")
        self.passes += 1
        logger.debug(f"Stream pass {self.passes} started ({self.n_rows}x{self.n_cols})")
        for chunk in self._chunks():
            check_indices(chunk.rows, chunk.cols, self.n_rows, self.n_cols)
            yield chunk

    def replay(self, consumer: Optional[ChunkConsumer] = None, per_event: Optional[Callable[[UpdateEvent], None]] = None) -> PassStats:
        """Deliver every update in order and return count plus checksum.

        `consumer` receives (rows, cols, deltas) arrays per chunk; `per_event`
        receives one UpdateEvent at a time.
        """
        digest = hashlib.sha256()
        count = 0
        for chunk in self.replay_chunks():
            digest.update(chunk.records().tobytes())
            count += len(chunk)
            if consumer is not None:
                consumer(chunk.rows, chunk.cols, chunk.deltas)
            if per_event is not None:
                for i, j, delta in zip(chunk.rows.tolist(), chunk.cols.tolist(), chunk.deltas.tolist()):
                    per_event(UpdateEvent(row=i, col=j, delta=delta))
        return PassStats(count=count, sha256=digest.hexdigest())

    def transposed(self) -> "TransposedStream":
        return TransposedStream(self)


class MemoryStream(UpdateStream):
    """Stream backed by in-memory arrays."""

    def __init__(
        self,
        rows: np.ndarray,
        cols: np.ndarray,
        deltas: np.ndarray,
        n_rows: int,
        n_cols: int,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
    ):
        super().__init__(n_rows, n_cols)
        self.rows = np.asarray(rows, dtype=np.int64).ravel()
        self.cols = np.asarray(cols, dtype=np.int64).ravel()
        self.deltas = check_deltas(deltas, allow_zero=False).ravel()
        if not (self.rows.size == self.cols.size == self.deltas.size):
            raise DomainError("rows, cols and deltas must have the same length")
        check_indices(self.rows, self.cols, self.n_rows, self.n_cols)
        self.chunk_size = max(1, int(chunk_size))

    @classmethod
    def from_events(cls, events, n_rows: int, n_cols: int) -> "MemoryStream":
        events = list(events)
        return cls(
            np.asarray([e.row for e in events], dtype=np.int64),
            np.asarray([e.col for e in events], dtype=np.int64),
            np.asarray([e.delta for e in events], dtype=np.float64),
            n_rows,
            n_cols,
        )

    def __len__(self) -> int:
        return int(self.rows.size)

    def _chunks(self) -> Iterator[EventChunk]:
        for start in range(0, len(self), self.chunk_size):
            stop = start + self.chunk_size
            yield EventChunk(self.rows[start:stop], self.cols[start:stop], self.deltas[start:stop])

    def permuted(self, seed: int) -> "MemoryStream":
        """Same updates in a seeded random order."""
        order = np.random.default_rng(seed).permutation(len(self))
        return MemoryStream(
            self.rows[order], self.cols[order], self.deltas[order], self.n_rows, self.n_cols, self.chunk_size
        )


class OneShotStream(UpdateStream):
    """Wraps another stream but allows exactly one pass."""

    replayable = False

    def __init__(self, inner: UpdateStream):
        super().__init__(inner.n_rows, inner.n_cols)
        self.inner = inner

    def _chunks(self) -> Iterator[EventChunk]:
        return self.inner._chunks()


class TransposedStream(UpdateStream):
    """View of a stream as updates to A^T; passes are counted on the source."""

    def __init__(self, inner: UpdateStream):
        self.n_rows = inner.n_cols
        self.n_cols = inner.n_rows
        self.inner = inner

    @property
    def replayable(self) -> bool:
        return self.inner.replayable

    def replay_chunks(self) -> Iterator[EventChunk]:
        for chunk in self.inner.replay_chunks():
            yield EventChunk(chunk.cols, chunk.rows, chunk.deltas)

    def _chunks(self) -> Iterator[EventChunk]:
        for chunk in self.inner._chunks():
            yield EventChunk(chunk.cols, chunk.rows, chunk.deltas)

    @property
    def passes(self) -> int:
        return self.inner.passes


def accumulate_dense(stream: UpdateStream) -> np.ndarray:
    """Replay the stream into a dense float64 matrix (one pass)."""
    A = np.zeros(stream.shape, dtype=np.float64)

    def consume(rows: np.ndarray, cols: np.ndarray, deltas: np.ndarray) -> None:
        np.add.at(A, (rows, cols), deltas)

    stream.replay(consume)
    return A
