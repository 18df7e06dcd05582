"""
K-Set: recover a turnstile-updated vector exactly when its support is at
most K, report Fail otherwise.

Each set is a table of `rows` x `width` cells. A cell keeps three linear
sums over the coordinates hashed into it:

- count            sum of values (int64, exact)
- index_sum        sum of coord * value        (mod P)
- fingerprint_sum  sum of fp(coord) * value    (mod P)

A cell holding one coordinate decodes as coord = index_sum / count (mod P)
and is confirmed by the fingerprint. Decoding peels pure cells across rows
until nothing changes; any residual mass left behind means Fail.

KSetBank stores many independent sets in one array so a whole grid of
sketches (one per stream, per level) updates and peels with vectorized
numpy calls. KSet is the single-set wrapper.

Design principles:
- All state is linear in the stream, so update order never changes it.
- Fail is a value (None), not an exception.
- Values are int64; accumulated mass beyond 2^62 raises KSetOverflowError.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from app.errors import ConfigError, DomainError, KSetOverflowError
from app.randkit.hashing import HashFamily, keyed_mix, next_prime, MIN_MODULUS

logger = logging.getLogger(__name__)

# =============================================================================
# Configuration Constants
# =============================================================================

DEFAULT_BUCKET_FACTOR = 1.5
FINGERPRINT_DEGREE = 4
MIN_ROWS = 3
MAX_MASS = float(2 ** 62)
CELL_FIELDS = 3


def default_rows(capacity_k: int, fail_prob: float) -> int:
    """O(log(k/delta)) hash rows, at least three."""
    return max(MIN_ROWS, math.ceil(math.log2(max(capacity_k, 1) / fail_prob) / 4))


def _modpow(base: np.ndarray, exponent: int, modulus: int) -> np.ndarray:
    result = np.ones_like(base)
    base = base % modulus
    while exponent:
        if exponent & 1:
            result = (result * base) % modulus
        base = (base * base) % modulus
        exponent >>= 1
    return result


# =============================================================================
# Results
# =============================================================================

@dataclass
class SparseVector:
    """Recovered support (sorted) and exact integer values."""
    indices: np.ndarray
    values: np.ndarray

    def to_dict(self) -> Dict[int, int]:
        return {int(i): int(v) for i, v in zip(self.indices, self.values)}

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class BankRecovery:
    """Query result for a batch of sets.

    `ok[s]` is False when set `set_ids[s]` failed. Recovered entries are
    concatenated in CSR form: entries of set_ids[s] live in
    indices[indptr[s]:indptr[s+1]] (empty for failed sets).
    """
    set_ids: np.ndarray
    ok: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def vector(self, position: int) -> Optional[SparseVector]:
        if not self.ok[position]:
            return None
        lo, hi = self.indptr[position], self.indptr[position + 1]
        return SparseVector(self.indices[lo:hi].copy(), self.values[lo:hi].copy())

    @property
    def entry_sets(self) -> np.ndarray:
        """Position (into set_ids) of every recovered entry."""
        return np.repeat(np.arange(self.set_ids.size), np.diff(self.indptr))


# =============================================================================
# Bank of K-Sets
# =============================================================================

class KSetBank:
    """
    `num_sets` independent K-Sets over the universe [0, n) with a shared shape.

    Sets differ only through the bucket hash, which is keyed by (row seed,
    set id, coordinate), so two sets never share collision patterns.
    """

    def __init__(
        self,
        num_sets: int,
        capacity_k: int,
        universe: int,
        fail_prob: float = 0.01,
        seed: int = 0,
        bucket_factor: float = DEFAULT_BUCKET_FACTOR,
        rows: Optional[int] = None,
    ):
        """
        Args:
            num_sets: Number of independent sets in the bank
            capacity_k: Largest support recovered exactly
            universe: Coordinates lie in [0, universe)
            fail_prob: Target failure probability delta per set
            seed: Seed for bucket, fingerprint and row hashes
            bucket_factor: Buckets per row as a multiple of capacity_k
            rows: Override the number of hash rows

        Raises:
            ConfigError: On non-positive sizes or delta outside (0, 1)
        """
        if num_sets < 1 or capacity_k < 1 or universe < 1:
            raise ConfigError(
                f"K-Set bank needs positive sizes, got num_sets={num_sets}, "
                f"capacity_k={capacity_k}, universe={universe}"
            )
        if not (0.0 < fail_prob < 1.0):
            raise ConfigError(f"fail_prob must be in (0, 1), got {fail_prob}")
        self.num_sets = int(num_sets)
        self.capacity_k = int(capacity_k)
        self.universe = int(universe)
        self.fail_prob = float(fail_prob)
        self.seed = int(seed)
        self.rows = int(rows) if rows is not None else default_rows(self.capacity_k, self.fail_prob)
        self.width = max(2, math.ceil(bucket_factor * self.capacity_k))
        self.prime = next_prime(max(self.universe, MIN_MODULUS))

        rng = np.random.default_rng(self.seed)
        self._row_seeds = rng.integers(0, 2 ** 63, size=self.rows, dtype=np.int64)
        self._fingerprint = HashFamily(
            seed=int(rng.integers(0, 2 ** 63)),
            degree=FINGERPRINT_DEGREE,
            universe=self.universe,
            prime_modulus=self.prime,
        )

        shape = (self.num_sets, self.rows, self.width)
        self.count = np.zeros(shape, dtype=np.int64)
        self.index_sum = np.zeros(shape, dtype=np.int64)
        self.fingerprint_sum = np.zeros(shape, dtype=np.int64)
        self._mass = np.zeros(self.num_sets, dtype=np.float64)

    # -------------------------------------------------------------------------
    # Hashing
    # -------------------------------------------------------------------------

    def _buckets(self, row: int, set_ids: np.ndarray, coords: np.ndarray) -> np.ndarray:
        mixed = keyed_mix(int(self._row_seeds[row]), set_ids, coords)
        return (mixed % np.uint64(self.width)).astype(np.int64)

    # -------------------------------------------------------------------------
    # Updates
    # -------------------------------------------------------------------------

    def update(self, set_ids: np.ndarray, coords: np.ndarray, deltas: np.ndarray) -> None:
        """Apply updates (set_ids[t], coords[t], deltas[t]) for all t.

        Raises:
            DomainError: If a coordinate or set id is out of range, or deltas are not integers
            KSetOverflowError: If a set's accumulated mass would exceed 2^62
        """
        set_ids = np.asarray(set_ids, dtype=np.int64)
        coords = np.asarray(coords, dtype=np.int64)
        deltas = np.asarray(deltas)
        if deltas.dtype.kind not in "iu":
            raise DomainError(f"K-Set deltas must be integers, got dtype {deltas.dtype}")
        deltas = deltas.astype(np.int64)
        if coords.size == 0:
            return
        if coords.min() < 0 or coords.max() >= self.universe:
            raise DomainError(f"K-Set coordinate out of range [0, {self.universe})")
        if set_ids.min() < 0 or set_ids.max() >= self.num_sets:
            raise DomainError(f"K-Set id out of range [0, {self.num_sets})")

        mass = self._mass.copy()
        np.add.at(mass, set_ids, np.abs(deltas).astype(np.float64))
        if mass.max() >= MAX_MASS:
            raise KSetOverflowError("K-Set accumulated mass exceeds the 64-bit fixed-point range")
        self._mass = mass

        self._add(set_ids, coords, deltas, sign=1)

    def _add(
        self,
        set_ids: np.ndarray,
        coords: np.ndarray,
        deltas: np.ndarray,
        sign: int,
        count: Optional[np.ndarray] = None,
        index_sum: Optional[np.ndarray] = None,
        fingerprint_sum: Optional[np.ndarray] = None,
        set_slots: Optional[np.ndarray] = None,
    ) -> None:
        """Add sign * delta at coords into the given cell arrays (defaults to the live state)."""
        count = self.count if count is None else count
        index_sum = self.index_sum if index_sum is None else index_sum
        fingerprint_sum = self.fingerprint_sum if fingerprint_sum is None else fingerprint_sum
        slots = set_ids if set_slots is None else set_slots

        p = self.prime
        residues = np.mod(deltas, p)
        index_terms = (coords * residues) % p
        fp_terms = (self._fingerprint.evaluate(coords) * residues) % p
        if sign < 0:
            deltas = -deltas
            index_terms = (p - index_terms) % p
            fp_terms = (p - fp_terms) % p

        flat_count = count.reshape(-1)
        flat_index = index_sum.reshape(-1)
        flat_fp = fingerprint_sum.reshape(-1)
        for row in range(self.rows):
            buckets = self._buckets(row, set_ids, coords)
            cells = (slots * self.rows + row) * self.width + buckets
            np.add.at(flat_count, cells, deltas)
            np.add.at(flat_index, cells, index_terms)
            np.add.at(flat_fp, cells, fp_terms)
            flat_index[cells] %= p
            flat_fp[cells] %= p

    # -------------------------------------------------------------------------
    # Queries
    # -------------------------------------------------------------------------

    def query(self, set_ids: Optional[np.ndarray] = None) -> BankRecovery:
        """Recover every requested set (all sets by default)."""
        if set_ids is None:
            set_ids = np.arange(self.num_sets, dtype=np.int64)
        set_ids = np.asarray(set_ids, dtype=np.int64)
        ok = np.zeros(set_ids.size, dtype=bool)

        count_nz = self.count[set_ids] != 0
        nonempty = (
            count_nz.any(axis=(1, 2))
            | (self.index_sum[set_ids] != 0).any(axis=(1, 2))
            | (self.fingerprint_sum[set_ids] != 0).any(axis=(1, 2))
        )
        ok[~nonempty] = True

        # Support >= nonzero cells in any row, so a crowded row already means Fail.
        occupied_per_row = count_nz.sum(axis=2).max(axis=1)
        candidates = np.flatnonzero(nonempty & (occupied_per_row <= self.capacity_k))
        logger.debug(
            f"K-Set query: {set_ids.size} sets, {int((~nonempty).sum())} empty, "
            f"{candidates.size} to peel"
        )

        entry_pos = np.empty(0, dtype=np.int64)
        entry_idx = np.empty(0, dtype=np.int64)
        entry_val = np.empty(0, dtype=np.int64)
        if candidates.size:
            peeled_ok, entry_pos, entry_idx, entry_val = self._peel(set_ids[candidates])
            ok[candidates] = peeled_ok
            entry_pos = candidates[entry_pos]

        keep = ok[entry_pos] if entry_pos.size else np.empty(0, dtype=bool)
        entry_pos, entry_idx, entry_val = entry_pos[keep], entry_idx[keep], entry_val[keep]
        order = np.lexsort((entry_idx, entry_pos))
        entry_pos, entry_idx, entry_val = entry_pos[order], entry_idx[order], entry_val[order]
        indptr = np.zeros(set_ids.size + 1, dtype=np.int64)
        np.cumsum(np.bincount(entry_pos, minlength=set_ids.size), out=indptr[1:])
        return BankRecovery(set_ids=set_ids, ok=ok, indptr=indptr, indices=entry_idx, values=entry_val)

    def _peel(self, set_ids: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Peel a frozen copy of the given sets; returns (ok, positions, coords, values)."""
        p = self.prime
        m = set_ids.size
        count = self.count[set_ids].copy()
        index_sum = self.index_sum[set_ids].copy()
        fingerprint_sum = self.fingerprint_sum[set_ids].copy()
        slots = np.arange(m, dtype=np.int64)

        found_pos, found_idx, found_val = [], [], []
        max_rounds = 4 * self.capacity_k + 8
        for _ in range(max_rounds):
            pos, row, col = np.nonzero(count)
            if pos.size == 0:
                break
            values = count[pos, row, col]
            residues = np.mod(values, p)
            usable = residues != 0
            pos, row, col, values, residues = (
                pos[usable], row[usable], col[usable], values[usable], residues[usable]
            )
            coords = (index_sum[pos, row, col] * _modpow(residues, p - 2, p)) % p
            in_range = coords < self.universe
            pos, row, col, values, residues, coords = (
                pos[in_range], row[in_range], col[in_range],
                values[in_range], residues[in_range], coords[in_range],
            )
            fp_ok = (self._fingerprint.evaluate(coords) * residues) % p == fingerprint_sum[pos, row, col]
            pos, values, coords = pos[fp_ok], values[fp_ok], coords[fp_ok]
            if pos.size == 0:
                break

            # A coordinate that is pure in several rows is peeled once.
            _, first = np.unique(pos * self.universe + coords, return_index=True)
            pos, values, coords = pos[first], values[first], coords[first]

            found_pos.append(pos)
            found_idx.append(coords)
            found_val.append(values)
            self._add(
                set_ids[pos], coords, values, sign=-1,
                count=count, index_sum=index_sum, fingerprint_sum=fingerprint_sum,
                set_slots=slots[pos],
            )

        residual = (
            (count != 0).any(axis=(1, 2))
            | (index_sum != 0).any(axis=(1, 2))
            | (fingerprint_sum != 0).any(axis=(1, 2))
        )
        if not found_pos:
            empty = np.empty(0, dtype=np.int64)
            return ~residual, empty, empty, empty

        pos = np.concatenate(found_pos)
        idx = np.concatenate(found_idx)
        val = np.concatenate(found_val)
        # Merge repeated decodes of one coordinate, then drop zeros.
        keys, inverse = np.unique(pos * self.universe + idx, return_inverse=True)
        merged = np.zeros(keys.size, dtype=np.int64)
        np.add.at(merged, inverse, val)
        pos = keys // self.universe
        idx = keys % self.universe
        nz = merged != 0
        pos, idx, merged = pos[nz], idx[nz], merged[nz]

        support = np.bincount(pos, minlength=m)
        ok = ~residual & (support <= self.capacity_k)
        return ok, pos, idx, merged

    # -------------------------------------------------------------------------
    # Accounting
    # -------------------------------------------------------------------------

    @property
    def cells_per_set(self) -> int:
        return self.rows * self.width

    @property
    def cell_count(self) -> int:
        return self.num_sets * self.cells_per_set

    @property
    def nbytes(self) -> int:
        """Cell payload, per-set mass counters and hash seeds."""
        seed_bytes = 8 * (self.rows + self._fingerprint.degree)
        return self.cell_count * CELL_FIELDS * 8 + self._mass.nbytes + seed_bytes

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "count": self.count,
            "index_sum": self.index_sum,
            "fingerprint_sum": self.fingerprint_sum,
            "mass": self._mass,
        }

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name in ("count", "index_sum", "fingerprint_sum"):
            if arrays[name].shape != getattr(self, name).shape:
                raise DomainError(f"K-Set state '{name}' has shape {arrays[name].shape}")
            getattr(self, name)[...] = arrays[name]
        self._mass[...] = arrays["mass"]


# =============================================================================
# Single K-Set
# =============================================================================

class KSet:
    """One K-Set; a thin wrapper over a bank of size one."""

    def __init__(
        self,
        capacity_k: int,
        universe: int,
        fail_prob: float = 0.01,
        seed: int = 0,
        bucket_factor: float = DEFAULT_BUCKET_FACTOR,
    ):
        self._bank = KSetBank(
            num_sets=1,
            capacity_k=capacity_k,
            universe=universe,
            fail_prob=fail_prob,
            seed=seed,
            bucket_factor=bucket_factor,
        )

    @property
    def capacity_k(self) -> int:
        return self._bank.capacity_k

    @property
    def universe(self) -> int:
        return self._bank.universe

    @property
    def rows(self) -> int:
        return self._bank.rows

    @property
    def width(self) -> int:
        return self._bank.width

    @property
    def cell_count(self) -> int:
        return self._bank.cell_count

    @property
    def cells(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(count, index_sum, fingerprint_sum), each rows x width."""
        return self._bank.count[0], self._bank.index_sum[0], self._bank.fingerprint_sum[0]

    def update(self, coord: int, delta: int) -> "KSet":
        self.update_many(np.asarray([coord]), np.asarray([delta], dtype=np.int64))
        return self

    def update_many(self, coords: np.ndarray, deltas: np.ndarray) -> "KSet":
        coords = np.asarray(coords, dtype=np.int64)
        self._bank.update(np.zeros(coords.size, dtype=np.int64), coords, deltas)
        return self

    def query(self) -> Optional[SparseVector]:
        return self._bank.query(np.asarray([0])).vector(0)


def kset_update(s: KSet, coord: int, delta: int) -> KSet:
    """Apply one turnstile update (coord, delta)."""
    return s.update(coord, delta)


def kset_query(s: KSet) -> Optional[SparseVector]:
    """Exact sparse vector when support <= capacity_k, else None (Fail)."""
    return s.query()
