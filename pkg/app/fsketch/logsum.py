"""
LogSum: single-pass estimate of <x, log^c(|y| + 1)> for a fixed weight
vector x and a turnstile-updated vector y.

The stream is subsampled at geometric rates p_l = min(gamma * 2^-(l+1), 1),
one K-Set per level. At query time the densest level whose K-Set did not
Fail is decoded exactly and the estimate is

    (1 / p_l) * sum_{i in S_l} x_i * f(v_i)

LevelledSampleGrid is the engine: it runs the same construction for many
streams at once over one K-Set bank and is reused by the matrix product
sketch.

Usage:
    sk = logsum_init(x, n=len(x), epsilon=0.25, delta=0.01, power_c=1)
    logsum_update(sk, 3, +1.0)
    logsum_query(sk)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from app.config import Settings, get_settings
from app.errors import ConfigError, DomainError, EstimationUnavailableError
from app.fsketch.transforms import Log1pPower
from app.kset.kset import KSetBank, SparseVector
from app.randkit.hashing import HashFamily, default_degree, subsample_mask
from app.streams.numeric_guards import check_indices, from_fixed_point, to_fixed_point

logger = logging.getLogger(__name__)


# =============================================================================
# Parameter rules
# =============================================================================

def validate_accuracy(epsilon: float, delta: float) -> None:
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must be in (0, 1), got {delta}")


def logsum_levels(n: int) -> int:
    """t = ceil(log2 n) + 2."""
    return math.ceil(math.log2(n)) + 2 if n > 1 else 2


def logsum_gamma(n: int, epsilon: float, delta: float, settings: Optional[Settings] = None) -> float:
    """Oversampling factor gamma = c * eps^-2 * ln(n/delta)^e."""
    settings = settings or get_settings()
    return settings.gamma_constant * epsilon ** -2 * math.log(n / delta) ** settings.gamma_exponent


def logsum_capacity(n: int, epsilon: float, delta: float, settings: Optional[Settings] = None) -> int:
    """Per-level K-Set budget K = C * eps^-2 * ln^2(n/delta), capped at n."""
    settings = settings or get_settings()
    k = math.ceil(settings.kset_capacity_constant * epsilon ** -2 * math.log(n / delta) ** 2)
    return max(1, min(n, k))


def level_probabilities(gamma: float, levels: int) -> np.ndarray:
    """p_l = min(gamma * 2^-(l+1), 1); non-increasing in l."""
    return np.minimum(gamma * 2.0 ** -(np.arange(levels) + 1.0), 1.0)


# =============================================================================
# Engine
# =============================================================================

@dataclass
class LevelSelection:
    """Chosen level per stream and the exact sample it holds.

    `level[s] == -1` means every level of stream s failed. Samples are in
    CSR form: indices[indptr[s]:indptr[s+1]] with fixed-point values.
    """
    level: np.ndarray
    prob: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    level_ok: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return self.level < 0

    @property
    def entry_streams(self) -> np.ndarray:
        return np.repeat(np.arange(self.level.size), np.diff(self.indptr))


class LevelledSampleGrid:
    """
    `num_streams` vectors over [0, universe), each subsampled into `levels`
    K-Sets. Level hashes depend only on the coordinate, so every stream sees
    the same subsample at a given level.
    """

    def __init__(
        self,
        num_streams: int,
        universe: int,
        probabilities: np.ndarray,
        capacity_k: int,
        fail_prob: float,
        seed: int = 0,
        hash_degree: Optional[int] = None,
        bucket_factor: Optional[float] = None,
        settings: Optional[Settings] = None,
    ):
        settings = settings or get_settings()
        self.num_streams = int(num_streams)
        self.universe = int(universe)
        self.probabilities = np.asarray(probabilities, dtype=np.float64)
        self.levels = int(self.probabilities.size)
        self.capacity_k = int(capacity_k)
        self.seed = int(seed)
        self.hash_degree = int(hash_degree or default_degree(universe))

        rng = np.random.default_rng(self.seed)
        self.hashes = [
            HashFamily(seed=int(rng.integers(0, 2 ** 63)), degree=self.hash_degree, universe=self.universe)
            for _ in range(self.levels)
        ]
        everything = np.arange(self.universe, dtype=np.int64)
        self.members = np.stack(
            [subsample_mask(h, everything, float(p)) for h, p in zip(self.hashes, self.probabilities)]
        )
        self.bank = KSetBank(
            num_sets=self.num_streams * self.levels,
            capacity_k=self.capacity_k,
            universe=self.universe,
            fail_prob=fail_prob,
            seed=int(rng.integers(0, 2 ** 63)),
            bucket_factor=bucket_factor or settings.kset_bucket_factor,
        )
        self.kset_touches = 0

    def update(self, stream_ids: np.ndarray, coords: np.ndarray, fixed_deltas: np.ndarray) -> None:
        """Route each update to every level whose hash keeps its coordinate."""
        stream_ids = np.asarray(stream_ids, dtype=np.int64)
        coords = np.asarray(coords, dtype=np.int64)
        fixed_deltas = np.asarray(fixed_deltas, dtype=np.int64)
        for level in range(self.levels):
            keep = self.members[level, coords]
            if not keep.any():
                continue
            self.kset_touches += int(keep.sum())
            self.bank.update(stream_ids[keep] * self.levels + level, coords[keep], fixed_deltas[keep])

    def select(self) -> LevelSelection:
        """Pick the densest non-failing level for every stream."""
        recovery = self.bank.query()
        level_ok = recovery.ok.reshape(self.num_streams, self.levels)
        any_ok = level_ok.any(axis=1)
        chosen = np.where(any_ok, level_ok.argmax(axis=1), -1)

        chosen_sets = np.flatnonzero(any_ok) * self.levels + chosen[any_ok]
        counts = np.zeros(self.num_streams, dtype=np.int64)
        counts[any_ok] = recovery.indptr[chosen_sets + 1] - recovery.indptr[chosen_sets]
        indptr = np.zeros(self.num_streams + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        is_chosen = np.zeros(self.bank.num_sets, dtype=bool)
        is_chosen[chosen_sets] = True
        take = np.flatnonzero(is_chosen[recovery.entry_sets])
        prob = np.where(any_ok, self.probabilities[np.maximum(chosen, 0)], np.nan)

        if (~any_ok).any():
            logger.debug(f"{int((~any_ok).sum())} of {self.num_streams} streams failed at every level")
        return LevelSelection(
            level=chosen,
            prob=prob,
            indptr=indptr,
            indices=recovery.indices[take],
            values=recovery.values[take],
            level_ok=level_ok,
        )

    def level_vector(self, stream: int, level: int) -> Optional[SparseVector]:
        """Exact contents of one (stream, level) K-Set, or None on Fail."""
        return self.bank.query(np.asarray([stream * self.levels + level])).vector(0)

    def occupied_entries(self, selection: LevelSelection) -> int:
        return int(selection.indices.size)

    @property
    def nbytes(self) -> int:
        return self.bank.nbytes + 8 * self.levels * self.hash_degree


# =============================================================================
# LogSum sketch
# =============================================================================

@dataclass
class StreamMeta:
    """Universe size, observed update count and accuracy targets."""
    n: int
    m: int
    epsilon: float
    delta: float


class LogSumSketch:
    """
    Estimates <x, log^c(|y| + 1)> in one pass over updates to y.

    Coordinates with x_a = 0 never enter a K-Set.
    """

    def __init__(
        self,
        x: np.ndarray,
        n: Optional[int] = None,
        epsilon: float = 0.25,
        delta: float = 0.01,
        power_c: int = 1,
        *,
        gamma: Optional[float] = None,
        capacity: Optional[int] = None,
        seed: Optional[int] = None,
        hash_degree: Optional[int] = None,
        settings: Optional[Settings] = None,
    ):
        """
        Args:
            x: Fixed weight vector of length n
            n: Universe size (defaults to len(x))
            epsilon: Accuracy target
            delta: Failure probability target
            power_c: c in log^c
            gamma: Oversampling override (default from logsum_gamma)
            capacity: K-Set budget override (default from logsum_capacity)
            seed: Seed for hashes (defaults to FSKETCH_SEED)
            hash_degree: Independence level of the subsampling hashes

        Raises:
            ConfigError: On invalid epsilon/delta/n/power_c or a length mismatch
        """
        settings = settings or get_settings()
        validate_accuracy(epsilon, delta)
        x = np.asarray(x, dtype=np.float64)
        n = int(n if n is not None else x.size)
        if n < 1:
            raise ConfigError(f"n must be >= 1, got {n}")
        if x.shape != (n,):
            raise ConfigError(f"x must have shape ({n},), got {x.shape}")

        self.x = x
        self.transform = Log1pPower(power=power_c)
        self.meta = StreamMeta(n=n, m=0, epsilon=float(epsilon), delta=float(delta))
        self.scale = settings.fixed_point_scale
        self.seed = int(settings.seed if seed is None else seed)
        self.gamma = float(gamma if gamma is not None else logsum_gamma(n, epsilon, delta, settings))
        self.capacity = int(capacity if capacity is not None else logsum_capacity(n, epsilon, delta, settings))
        self.levels_t = logsum_levels(n)
        self.grid = LevelledSampleGrid(
            num_streams=1,
            universe=n,
            probabilities=level_probabilities(self.gamma, self.levels_t),
            capacity_k=self.capacity,
            fail_prob=delta,
            seed=self.seed,
            hash_degree=hash_degree,
            settings=settings,
        )
        logger.debug(
            f"LogSum init: n={n}, levels={self.levels_t}, gamma={self.gamma:.1f}, K={self.capacity}"
        )

    @property
    def probabilities(self) -> np.ndarray:
        return self.grid.probabilities

    @property
    def kset_touches(self) -> int:
        return self.grid.kset_touches

    def update(self, coord: int, delta: float) -> "LogSumSketch":
        return self.update_many(np.asarray([coord]), np.asarray([delta], dtype=np.float64))

    def update_many(self, coords: np.ndarray, deltas: np.ndarray) -> "LogSumSketch":
        """Vectorized updates y[coords[t]] += deltas[t].

        Raises:
            DomainError: If a coordinate is outside [0, n)
        """
        coords = np.asarray(coords, dtype=np.int64)
        check_indices(np.zeros_like(coords), coords, 1, self.meta.n)
        fixed = to_fixed_point(deltas, self.scale)
        self.meta.m += int(coords.size)
        guard = self.x[coords] != 0
        if guard.any():
            self.grid.update(np.zeros(int(guard.sum()), dtype=np.int64), coords[guard], fixed[guard])
        return self

    def _estimate(self, indices: np.ndarray, values: np.ndarray, prob: float) -> float:
        v = from_fixed_point(values, self.scale)
        return float(np.sum(self.x[indices] * self.transform.apply(v)) / prob)

    def query(self) -> float:
        """Estimate from the densest non-failing level.

        Raises:
            EstimationUnavailableError: If every level failed
        """
        selection = self.grid.select()
        if selection.failed[0]:
            raise EstimationUnavailableError("LogSum: every level returned Fail")
        logger.debug(f"LogSum query answered at level {int(selection.level[0])} (p={selection.prob[0]:.4g})")
        return self._estimate(selection.indices, selection.values, float(selection.prob[0]))

    def level_estimate(self, level: int) -> Optional[float]:
        """Scaled estimator restricted to one level; None when that level fails."""
        if not 0 <= level < self.levels_t:
            raise DomainError(f"level must be in [0, {self.levels_t}), got {level}")
        vector = self.grid.level_vector(0, level)
        if vector is None:
            return None
        return self._estimate(vector.indices, vector.values, float(self.probabilities[level]))

    def level_contents(self, level: int) -> Optional[SparseVector]:
        """Exact K-Set contents of a level (fixed-point values), or None on Fail."""
        return self.grid.level_vector(0, level)

    @property
    def nbytes(self) -> int:
        return self.grid.nbytes

    # -------------------------------------------------------------------------
    # Serialization hooks
    # -------------------------------------------------------------------------

    def to_state(self) -> tuple:
        params = {
            "n": self.meta.n,
            "m": self.meta.m,
            "epsilon": self.meta.epsilon,
            "delta": self.meta.delta,
            "power_c": self.transform.power,
            "gamma": self.gamma,
            "capacity": self.capacity,
            "seed": self.seed,
            "hash_degree": self.grid.hash_degree,
            "scale": self.scale,
        }
        arrays: Dict[str, np.ndarray] = {"x": self.x, **self.grid.bank.state_arrays()}
        return "logsum", params, arrays

    @classmethod
    def from_state(cls, params: dict, arrays: Dict[str, np.ndarray]) -> "LogSumSketch":
        settings = get_settings().model_copy(update={"fixed_point_scale": int(params["scale"])})
        sketch = cls(
            arrays["x"],
            n=params["n"],
            epsilon=params["epsilon"],
            delta=params["delta"],
            power_c=params["power_c"],
            gamma=params["gamma"],
            capacity=params["capacity"],
            seed=params["seed"],
            hash_degree=params["hash_degree"],
            settings=settings,
        )
        sketch.meta.m = int(params["m"])
        sketch.grid.bank.load_state_arrays(arrays)
        return sketch


# =============================================================================
# Operations
# =============================================================================

def logsum_init(
    x: np.ndarray,
    n: int,
    epsilon: float,
    delta: float,
    power_c: int = 1,
    **kwargs,
) -> LogSumSketch:
    """Allocate ceil(log2 n) + 2 levels, each with its own hash and K-Set."""
    return LogSumSketch(x, n=n, epsilon=epsilon, delta=delta, power_c=power_c, **kwargs)


def logsum_update(s: LogSumSketch, coord: int, delta: float) -> LogSumSketch:
    """Feed one update to every level whose guard passes."""
    return s.update(coord, delta)


def logsum_query(s: LogSumSketch) -> float:
    """Scaled estimate at the densest successful level."""
    return s.query()
