"""
k-wise independent hashing over a prime field, plus a keyed 64-bit mixer.

HashFamily is a random polynomial with `degree` coefficients drawn from
GF(P); evaluating it at distinct keys gives `degree`-wise independent
values. The keyed mixer (splitmix64 finaliser applied to seed, i, j) is
used wherever a value must be a pure function of an index pair without
storing a table, e.g. K-Set bucket choice and count-sketch keys.

Usage:
    h = HashFamily(seed=7, degree=4, universe=10_000)
    h.evaluate(np.arange(10))          # vectorized
    hash_eval(h, 3)                    # scalar
    subsample_decision(h, 3, 0.25)     # Pr[True] = 0.25 over the seed
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from app.errors import ConfigError, DomainError

# =============================================================================
# Configuration Constants
# =============================================================================

MIN_MODULUS = 2 ** 31
# Keys and coefficients stay below the modulus, so Horner products fit in int64.
MAX_UNIVERSE = 2 ** 31

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_PAIR = np.uint64(0xD6E8FEB86659FD93)


@lru_cache(maxsize=64)
def next_prime(value: int) -> int:
    """Smallest prime >= value (trial division; values stay near 2^31)."""
    candidate = max(2, int(value))
    while True:
        if candidate < 4:
            return candidate
        if candidate % 2 == 0:
            candidate += 1
            continue
        limit = math.isqrt(candidate)
        if all(candidate % d for d in range(3, limit + 1, 2)):
            return candidate
        candidate += 2


def _is_prime(value: int) -> bool:
    return value >= 2 and next_prime(value) == value


def default_degree(universe: int) -> int:
    """Default independence level: ceil(log2 n), never below pairwise."""
    return max(2, math.ceil(math.log2(max(universe, 2))))


class HashFamily:
    """
    One member of a k-wise independent hash family h: [universe] -> [0, P).

    Evaluation is a pure function of (seed, degree, key): coefficients come
    from numpy's PCG64 generator seeded with `seed`, which is stable across
    platforms.
    """

    def __init__(
        self,
        seed: int,
        degree: int,
        universe: int,
        prime_modulus: Optional[int] = None,
    ):
        """
        Args:
            seed: 64-bit seed for the coefficients
            degree: Number of coefficients (independence level); 1 gives a constant
            universe: Keys must lie in [0, universe)
            prime_modulus: Field size; defaults to the smallest prime >= max(universe, 2^31)

        Raises:
            ConfigError: If degree or universe is invalid, or the modulus is not a prime >= universe
        """
        if degree < 1:
            raise ConfigError(f"Hash degree must be >= 1, got {degree}")
        if universe < 1 or universe > MAX_UNIVERSE:
            raise ConfigError(f"Hash universe must be in [1, 2^31], got {universe}")
        if prime_modulus is None:
            prime_modulus = next_prime(max(universe, MIN_MODULUS))
        elif prime_modulus < universe or not _is_prime(prime_modulus):
            raise ConfigError(
                f"prime_modulus must be a prime >= universe ({universe}), got {prime_modulus}"
            )
        self.seed = int(seed) & _MASK64
        self.degree = int(degree)
        self.universe = int(universe)
        self.prime_modulus = int(prime_modulus)

        rng = np.random.default_rng(self.seed)
        self.coefficients = rng.integers(0, self.prime_modulus, size=self.degree, dtype=np.int64)

    def evaluate(self, keys: Union[int, np.ndarray]) -> np.ndarray:
        """Vectorized evaluation; returns int64 values in [0, prime_modulus)."""
        keys = np.asarray(keys, dtype=np.int64)
        if keys.size and (keys.min() < 0 or keys.max() >= self.universe):
            raise DomainError(f"Hash key out of universe [0, {self.universe})")
        p = self.prime_modulus
        acc = np.full(keys.shape, self.coefficients[-1], dtype=np.int64)
        for coefficient in self.coefficients[-2::-1]:
            acc = (acc * keys + coefficient) % p
        return acc

    def __repr__(self) -> str:
        return (
            f"HashFamily(seed={self.seed}, degree={self.degree}, "
            f"universe={self.universe}, prime_modulus={self.prime_modulus})"
        )


def hash_eval(family: HashFamily, key: int) -> int:
    """Evaluate one key; raises DomainError when key is outside the universe."""
    return int(family.evaluate(np.asarray([key]))[0])


def _check_prob(prob: float) -> None:
    if not prob > 0:
        raise ConfigError(f"Subsampling probability must be > 0, got {prob}")


def subsample_mask(family: HashFamily, keys: np.ndarray, prob: float) -> np.ndarray:
    """Vectorized subsampling: key is kept iff h(key) < prob * P."""
    _check_prob(prob)
    keys = np.asarray(keys, dtype=np.int64)
    if prob >= 1.0:
        if keys.size and (keys.min() < 0 or keys.max() >= family.universe):
            raise DomainError(f"Hash key out of universe [0, {family.universe})")
        return np.ones(keys.shape, dtype=bool)
    threshold = int(prob * family.prime_modulus)
    return family.evaluate(keys) < threshold


def subsample_decision(family: HashFamily, key: int, prob: float) -> bool:
    """True with probability min(prob, 1) over the seed; deterministic per (seed, key, prob)."""
    return bool(subsample_mask(family, np.asarray([key]), prob)[0])


# =============================================================================
# Keyed mixing (pure function of seed and an index pair)
# =============================================================================

def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def keyed_mix(seed: int, i: Union[int, np.ndarray], j: Union[int, np.ndarray] = 0) -> np.ndarray:
    """64-bit mix of (seed, i, j) as uint64; broadcasts i against j."""
    i = np.asarray(i).astype(np.uint64)
    j = np.asarray(j).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = _splitmix64(np.full(np.broadcast(i, j).shape, np.uint64(int(seed) & _MASK64)))
        z = _splitmix64(z ^ i)
        z = _splitmix64(z ^ (j * _PAIR))
    return z


def keyed_uniform(seed: int, i: Union[int, np.ndarray], j: Union[int, np.ndarray] = 0) -> np.ndarray:
    """Uniforms in (0, 1] keyed by (seed, i, j), 53 bits of resolution."""
    z = keyed_mix(seed, i, j)
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
