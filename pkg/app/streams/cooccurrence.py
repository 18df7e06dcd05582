"""
Word co-occurrence streams from plain text.

Two passes over the token source:
1. unigram pass: counts, vocabulary of the vocab_n most frequent tokens
   (ties broken alphabetically) and total token count N
2. pair pass: for every two in-vocabulary tokens of the same line at
   distance t < window, emit (i, j, w) and (j, i, w) with w = 1 (unit)
   or 1/t (inverse_distance)

With pmi_prescale the pair weights are multiplied by N / (N_i N_j), so
log1p of the accumulated entry is log(PMI + 1).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np

from app.errors import ConfigError, DomainError
from app.streams.generators import entrywise_log
from app.streams.models import MemoryStream
from app.utils.file_utils import PathLike

logger = logging.getLogger(__name__)

WEIGHTINGS = ("unit", "inverse_distance")
PMI_VARIANTS = ("log1p", "log")
DEFAULT_WINDOW = 10
WEIGHT_RANK = 10


@dataclass
class CooccurrenceData:
    stream: MemoryStream
    vocabulary: Dict[str, int]
    unigram_counts: np.ndarray
    total_tokens: int
    pmi_prescaled: bool = False

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)


def read_tokens(path: PathLike) -> List[List[str]]:
    """UTF-8 text, one sentence per line, whitespace-separated tokens."""
    text = Path(path).read_text(encoding="utf-8")
    return [line.split() for line in text.splitlines() if line.strip()]


def build_vocabulary(sentences: Iterable[List[str]], vocab_n: int) -> tuple:
    counts: Counter = Counter()
    total = 0
    for sentence in sentences:
        counts.update(sentence)
        total += len(sentence)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:vocab_n]
    vocabulary = {token: index for index, (token, _) in enumerate(ranked)}
    unigram = np.asarray([count for _, count in ranked], dtype=np.float64)
    return vocabulary, unigram, total


def ingest_cooccurrence(
    sentences: List[List[str]],
    vocab_n: int,
    window: int = DEFAULT_WINDOW,
    weighting: str = "inverse_distance",
    pmi_prescale: bool = False,
) -> CooccurrenceData:
    """Build the co-occurrence update stream for the vocab_n most frequent tokens.

    Raises:
        ConfigError: On an empty vocabulary or bad window/weighting
    """
    if weighting not in WEIGHTINGS:
        raise ConfigError(f"weighting must be one of {WEIGHTINGS}, got '{weighting}'")
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    if vocab_n < 1:
        raise ConfigError(f"vocab_n must be >= 1, got {vocab_n}")

    vocabulary, unigram, total = build_vocabulary(sentences, vocab_n)
    if not vocabulary:
        raise ConfigError("empty vocabulary: the text has no tokens")

    ids = np.asarray([vocabulary.get(tok, -1) for sentence in sentences for tok in sentence], dtype=np.int64)
    line = np.repeat(np.arange(len(sentences)), [len(s) for s in sentences])

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for t in range(1, window):
        if t >= ids.size:
            break
        left, right = ids[:-t], ids[t:]
        keep = (left >= 0) & (right >= 0) & (line[:-t] == line[t:])
        w = 1.0 if weighting == "unit" else 1.0 / t
        for a, b in ((left[keep], right[keep]), (right[keep], left[keep])):
            rows.append(a)
            cols.append(b)
            weights.append(np.full(a.size, w))

    rows_all = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols_all = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    deltas = np.concatenate(weights) if weights else np.zeros(0)
    if pmi_prescale and deltas.size:
        deltas = deltas * total / (unigram[rows_all] * unigram[cols_all])

    n = len(vocabulary)
    stream = MemoryStream(rows_all, cols_all, deltas, n, n)
    logger.info(
        f"Co-occurrence ingest: {total} tokens, vocab {n}, window {window}, "
        f"{weighting} weights -> {len(stream)} updates"
    )
    return CooccurrenceData(
        stream=stream,
        vocabulary=vocabulary,
        unigram_counts=unigram,
        total_tokens=total,
        pmi_prescaled=pmi_prescale,
    )


def pmi_weights(unigram_counts: np.ndarray, rank: int = WEIGHT_RANK) -> np.ndarray:
    """p_j = max(1, (N_j / N_rank)^2), N_rank the rank-th largest count (or the smallest)."""
    counts = np.asarray(unigram_counts, dtype=np.float64)
    if counts.size == 0:
        raise DomainError("no unigram counts")
    reference = np.sort(counts)[::-1][min(rank, counts.size) - 1]
    return np.maximum(1.0, (counts / reference) ** 2)


def pmi_matrix(pair_counts: np.ndarray, unigram_counts: np.ndarray, total_tokens: int, variant: str = "log1p") -> np.ndarray:
    """Dense PMI oracle.

    variant="log1p": log(N_ij N / (N_i N_j) + 1)
    variant="log":   log(N_ij N / (N_i N_j)) on co-occurring pairs, 0 elsewhere
    """
    if variant not in PMI_VARIANTS:
        raise ConfigError(f"PMI variant must be one of {PMI_VARIANTS}, got '{variant}'")
    counts = np.asarray(unigram_counts, dtype=np.float64)
    ratio = np.asarray(pair_counts, dtype=np.float64) * total_tokens / np.outer(counts, counts)
    if variant == "log1p":
        return np.log1p(ratio)
    return entrywise_log(ratio)
