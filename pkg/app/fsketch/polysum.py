"""
PolySum: single-pass estimate of <x, |y|^p> for p in (0, 2].

Each coordinate i is expanded into copies_k logical keys (i, j). Key (i, j)
carries |x_i|^(1/p) * z(i, j) * y_i, where z(i, j) is a p-inverse draw, and
all keys share one count-sketch. At query time the (copies_k/2)-th largest
decoded magnitude t satisfies t^p ~ 2 * sum_i |x_i| |y_i|^p, so the answer
is (t / 2^(1/p))^p. Positive and negative parts of x use separate
count-sketches and the two estimates are subtracted.

PolySumGrid holds many such sketches (cells) with shared hashes; the
matrix product sketch uses one cell per entry of f(A)B.

Count-sketch cells are exact integers. Each key coefficient
|x_i|^(1/p) * z(i, j) is rounded once onto a fixed binary grid and each
delta is a fixed-point integer, so every contribution is an exact integer
product, kept as four 32-bit limbs in int64 counters. Any reordering or
rechunking of the same updates leaves the same integers, hence the same
canonical limbs and an identical query. Draws above Z_CAP are clamped
there; such keys still decode far above the order statistic the query
reads.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Tuple

import numpy as np

from app.config import Settings, get_settings
from app.errors import ConfigError
from app.fsketch.logsum import StreamMeta
from app.randkit.hashing import keyed_mix
from app.randkit.pinverse import PInverseSampler
from app.streams.numeric_guards import DEFAULT_FIXED_POINT_SCALE, check_indices, to_fixed_point

logger = logging.getLogger(__name__)

# Upper bound on logical keys processed per vectorized block.
KEY_BLOCK = 1 << 20
POSITIVE, NEGATIVE = 0, 1

# Cell value = sum_l limb[l] * 2^(32 l) / (2^coeff_shift * scale).
LIMBS = 4
LIMB_MASK = np.uint64(0xFFFFFFFF)
LIMB_SHIFT = np.uint64(32)
Z_CAP = 2.0 ** 32
COEFF_BITS = 30
COEFF_MAX = 2.0 ** 62


def polysum_copies(epsilon: float, settings: Optional[Settings] = None) -> int:
    """copies_k = ceil(C / eps^2)."""
    settings = settings or get_settings()
    return math.ceil(settings.polysum_copies_constant / epsilon ** 2)


def polysum_width(n: int, epsilon: float, settings: Optional[Settings] = None) -> int:
    """Count-sketch cells per row: ceil(C' * eps^-2 * ln^2 n)."""
    settings = settings or get_settings()
    return max(16, math.ceil(settings.polysum_width_constant * epsilon ** -2 * math.log(max(n, 2)) ** 2))


def polysum_rows(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def coefficient_shift(weight_bound: float) -> int:
    """Binary point of the key coefficients: weight_bound * Z_CAP lands just under 2^62."""
    if weight_bound <= 0:
        return COEFF_BITS
    return COEFF_BITS - math.ceil(math.log2(weight_bound))


def _exact_products(coeff: np.ndarray, magnitude: np.ndarray) -> np.ndarray:
    """coeff * magnitude (both < 2^63, uint64) as 32-bit limbs, shape coeff.shape + (LIMBS,).

    Limbs are not carried: limb 1 and 2 can reach 3 * 2^32, which the int64
    counters absorb.
    """
    k0, k1 = coeff & LIMB_MASK, coeff >> LIMB_SHIFT
    d0, d1 = magnitude & LIMB_MASK, magnitude >> LIMB_SHIFT
    p00, p01, p10, p11 = k0 * d0, k0 * d1, k1 * d0, k1 * d1
    limbs = np.empty(coeff.shape + (LIMBS,), dtype=np.int64)
    limbs[..., 0] = p00 & LIMB_MASK
    limbs[..., 1] = (p00 >> LIMB_SHIFT) + (p01 & LIMB_MASK) + (p10 & LIMB_MASK)
    limbs[..., 2] = (p01 >> LIMB_SHIFT) + (p10 >> LIMB_SHIFT) + (p11 & LIMB_MASK)
    limbs[..., 3] = p11 >> LIMB_SHIFT
    return limbs


# =============================================================================
# Engine
# =============================================================================

class PolySumGrid:
    """
    `num_cells` PolySum sketches over [0, universe) sharing hash functions
    and p-inverse draws. Each cell has a positive and a negative count-sketch.

    `weight_bound` bounds |x|^(1/p) over every weight the grid will see and
    fixes the coefficient grid; `scale` is the fixed-point scale of deltas.
    """

    def __init__(
        self,
        num_cells: int,
        universe: int,
        p: float,
        copies: int,
        rows: int,
        width: int,
        seed: int = 0,
        weight_bound: float = 1.0,
        scale: int = DEFAULT_FIXED_POINT_SCALE,
    ):
        if not (0.0 < p <= 2.0):
            raise ConfigError(f"p must be in (0, 2], got {p}")
        self.num_cells = int(num_cells)
        self.universe = int(universe)
        self.p = float(p)
        self.copies_k = int(copies)
        self.rows = int(rows)
        self.width = int(width)
        self.seed = int(seed)
        self.scale = int(scale)
        self.coeff_shift = coefficient_shift(float(weight_bound))

        rng = np.random.default_rng(self.seed)
        self._row_seeds = rng.integers(0, 2 ** 63, size=(2, self.rows), dtype=np.int64)
        self.sampler = PInverseSampler(seed=int(rng.integers(0, 2 ** 63)), p=self.p)
        self.limbs = np.zeros((self.num_cells, 2, self.rows, self.width, LIMBS), dtype=np.int64)
        self.cell_touches = 0

    def _bucket_sign(self, part: int, row: int, coords: np.ndarray, copies: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        mixed = keyed_mix(int(self._row_seeds[part, row]), coords, copies)
        buckets = ((mixed >> np.uint64(1)) % np.uint64(self.width)).astype(np.int64)
        signs = 1 - 2 * (mixed & np.uint64(1)).astype(np.int64)
        return buckets, signs

    def _block(self) -> int:
        return max(1, KEY_BLOCK // (self.copies_k * self.rows))

    def _coefficients(self, roots: np.ndarray, coords: np.ndarray, copies: np.ndarray) -> np.ndarray:
        """rint(|x|^(1/p) * min(z, Z_CAP) * 2^coeff_shift) per key, as uint64."""
        z = np.minimum(self.sampler.draw(coords[:, None], copies[None, :]), Z_CAP)
        scaled = np.ldexp(roots[:, None] * z, self.coeff_shift)
        return np.rint(np.minimum(scaled, COEFF_MAX)).astype(np.uint64)

    def update(self, cell_ids: np.ndarray, coords: np.ndarray, x_values: np.ndarray, fixed_deltas: np.ndarray) -> None:
        """Add key values |x|^(1/p) * z * delta for every (cell, coord) update.

        fixed_deltas are int64 fixed-point deltas at the grid's scale.
        x_values carries the weight x of that coordinate in that cell; its
        sign picks the sub-sketch and zero weights are skipped.
        """
        cell_ids = np.asarray(cell_ids, dtype=np.int64)
        coords = np.asarray(coords, dtype=np.int64)
        x_values = np.asarray(x_values, dtype=np.float64)
        fixed_deltas = np.asarray(fixed_deltas, dtype=np.int64)
        live = x_values != 0
        if not live.any():
            return
        cell_ids, coords, x_values, fixed_deltas = cell_ids[live], coords[live], x_values[live], fixed_deltas[live]

        # Merge repeated (cell, coord) pairs; integer sums are exact.
        keys, first, inverse = np.unique(cell_ids * self.universe + coords, return_index=True, return_inverse=True)
        summed = np.zeros(keys.size, dtype=np.int64)
        np.add.at(summed, inverse.ravel(), fixed_deltas)
        nonzero = summed != 0
        cell_ids, coords, x_values, summed = cell_ids[first][nonzero], coords[first][nonzero], x_values[first][nonzero], summed[nonzero]
        parts = np.where(x_values > 0, POSITIVE, NEGATIVE)
        roots = np.abs(x_values) ** (1.0 / self.p)
        magnitudes = np.abs(summed).astype(np.uint64)
        delta_signs = np.sign(summed)

        copies = np.arange(self.copies_k, dtype=np.int64)
        limb_ids = np.arange(LIMBS, dtype=np.int64)
        flat = self.limbs.reshape(-1)
        block = self._block()
        for part in (POSITIVE, NEGATIVE):
            sel = np.flatnonzero(parts == part)
            for lo in range(0, sel.size, block):
                idx = sel[lo:lo + block]
                c = coords[idx]
                products = _exact_products(self._coefficients(roots[idx], c, copies), magnitudes[idx][:, None])
                for row in range(self.rows):
                    buckets, signs = self._bucket_sign(part, row, c[:, None], copies[None, :])
                    base = ((cell_ids[idx] * 2 + part) * self.rows + row) * self.width
                    slots = ((base[:, None] + buckets)[..., None] * LIMBS + limb_ids).ravel()
                    signed = products * (signs * delta_signs[idx][:, None])[..., None]
                    np.add.at(flat, slots, signed.ravel())
        self.cell_touches += int(fixed_deltas.size) * self.copies_k * self.rows

    def canonical_limbs(self, cell_ids: Optional[np.ndarray] = None) -> np.ndarray:
        """Counters with carries propagated: limbs 0-2 in [0, 2^32), limb 3 signed.

        Equal integers give equal canonical limbs however the updates were split.
        """
        limbs = (self.limbs if cell_ids is None else self.limbs[cell_ids]).copy()
        for level in range(LIMBS - 1):
            carry = limbs[..., level] >> np.int64(32)
            limbs[..., level] -= carry << np.int64(32)
            limbs[..., level + 1] += carry
        return limbs

    def cell_values(self, cell_ids: np.ndarray, part: int) -> np.ndarray:
        """Count-sketch values of the given cells as float64, shape (cells, rows, width)."""
        limbs = self.canonical_limbs(cell_ids)[:, part].astype(np.float64)
        value = ((limbs[..., 3] * 2.0 ** 96 + limbs[..., 2] * 2.0 ** 64) + limbs[..., 1] * 2.0 ** 32) + limbs[..., 0]
        return np.ldexp(value, -self.coeff_shift) / float(self.scale)

    @property
    def tables(self) -> np.ndarray:
        """Float view of every cell: (num_cells, 2, rows, width)."""
        cells = np.arange(self.num_cells)
        return np.stack([self.cell_values(cells, POSITIVE), self.cell_values(cells, NEGATIVE)], axis=1)

    def _part_magnitudes(self, cell_ids: np.ndarray, part: int, coords: np.ndarray) -> np.ndarray:
        """|median decode| of every key (coord, copy), for each cell: shape (cells, keys)."""
        copies = np.arange(self.copies_k, dtype=np.int64)
        tables = self.cell_values(cell_ids, part)
        out = []
        block = max(1, self._block() // max(1, cell_ids.size))
        for lo in range(0, coords.size, block):
            c = coords[lo:lo + block]
            per_row = np.empty((self.rows, cell_ids.size, c.size * self.copies_k), dtype=np.float64)
            for row in range(self.rows):
                buckets, signs = self._bucket_sign(part, row, c[:, None], copies[None, :])
                per_row[row] = signs.ravel() * tables[:, row][:, buckets.ravel()]
            out.append(np.abs(np.median(per_row, axis=0)))
        return np.concatenate(out, axis=1)

    def estimate(self, cell_ids: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Estimates of <x, |y_cell|^p> for cells that all use the weight vector x."""
        cell_ids = np.asarray(cell_ids, dtype=np.int64)
        result = np.zeros(cell_ids.size, dtype=np.float64)
        rank = max(1, self.copies_k // 2)
        for part, sign in ((POSITIVE, 1.0), (NEGATIVE, -1.0)):
            coords = np.flatnonzero(x > 0) if part == POSITIVE else np.flatnonzero(x < 0)
            if coords.size == 0:
                continue
            live = self.canonical_limbs(cell_ids)[:, part].any(axis=(1, 2, 3))
            if not live.any():
                continue
            mags = self._part_magnitudes(cell_ids[live], part, coords)
            kth = mags.shape[1] - rank
            t = np.partition(mags, kth, axis=1)[:, kth]
            result[live] += sign * (t / 2.0 ** (1.0 / self.p)) ** self.p
        return result

    @property
    def nbytes(self) -> int:
        return self.limbs.nbytes + 8 * (self._row_seeds.size + 1)


# =============================================================================
# PolySum sketch
# =============================================================================

class PolySumSketch:
    """
    Estimates <x, |y|^p> in one pass; linear in the stream.

    Coordinates with x_i = 0 change no cells. Deltas are rounded to the
    fixed-point scale (FSKETCH_FIXED_POINT_SCALE) before they reach the
    counters.
    """

    def __init__(
        self,
        x: np.ndarray,
        n: Optional[int] = None,
        p: float = 1.0,
        epsilon: float = 0.25,
        *,
        copies: Optional[int] = None,
        rows: Optional[int] = None,
        width: Optional[int] = None,
        seed: Optional[int] = None,
        settings: Optional[Settings] = None,
    ):
        """
        Args:
            x: Fixed weight vector of length n (split into x+ and x-)
            n: Universe size (defaults to len(x))
            p: Exponent in (0, 2]
            epsilon: Accuracy target in (0, 1)
            copies: Override copies_k
            rows: Override count-sketch rows (default ceil(log2 n))
            width: Override count-sketch width
            seed: Seed (defaults to FSKETCH_SEED)

        Raises:
            ConfigError: If p or epsilon is out of range, or x has the wrong shape
        """
        settings = settings or get_settings()
        if not (0.0 < p <= 2.0):
            raise ConfigError(f"p must be in (0, 2], got {p}")
        if not (0.0 < epsilon < 1.0):
            raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
        x = np.asarray(x, dtype=np.float64)
        n = int(n if n is not None else x.size)
        if n < 1 or x.shape != (n,):
            raise ConfigError(f"x must have shape ({n},), got {x.shape}")
        if not np.isfinite(x).all():
            raise ConfigError("x must be finite")

        self.x = x
        self.meta = StreamMeta(n=n, m=0, epsilon=float(epsilon), delta=0.0)
        self.seed = int(settings.seed if seed is None else seed)
        self.scale = int(settings.fixed_point_scale)
        self.grid = PolySumGrid(
            num_cells=1,
            universe=n,
            p=p,
            copies=int(copies or polysum_copies(epsilon, settings)),
            rows=int(rows or polysum_rows(n)),
            width=int(width or polysum_width(n, epsilon, settings)),
            seed=self.seed,
            weight_bound=float(np.abs(x).max()) ** (1.0 / p),
            scale=self.scale,
        )

    @property
    def p(self) -> float:
        return self.grid.p

    @property
    def copies_k(self) -> int:
        return self.grid.copies_k

    @property
    def rows(self) -> int:
        return self.grid.rows

    @property
    def width(self) -> int:
        return self.grid.width

    @property
    def tables(self) -> np.ndarray:
        """(2, rows, width): positive then negative count-sketch."""
        return self.grid.tables[0]

    @property
    def cell_touches(self) -> int:
        return self.grid.cell_touches

    def update(self, coord: int, delta: float) -> "PolySumSketch":
        return self.update_many(np.asarray([coord]), np.asarray([delta], dtype=np.float64))

    def update_many(self, coords: np.ndarray, deltas: np.ndarray) -> "PolySumSketch":
        """Vectorized updates y[coords[t]] += deltas[t].

        Raises:
            DomainError: On non-finite deltas or out-of-range coordinates
        """
        coords = np.asarray(coords, dtype=np.int64)
        fixed = to_fixed_point(deltas, self.scale)
        check_indices(np.zeros_like(coords), coords, 1, self.meta.n)
        self.meta.m += int(coords.size)
        self.grid.update(np.zeros_like(coords), coords, self.x[coords], fixed)
        return self

    def query(self) -> float:
        """Positive-part estimate minus negative-part estimate."""
        value = float(self.grid.estimate(np.asarray([0]), self.x)[0])
        logger.debug(f"PolySum query: {value:.6g} after {self.meta.m} updates")
        return value

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
            "p": self.p,
            "epsilon": self.meta.epsilon,
            "copies": self.copies_k,
            "rows": self.rows,
            "width": self.width,
            "seed": self.seed,
            "scale": self.scale,
        }
        arrays: Dict[str, np.ndarray] = {"x": self.x, "limbs": self.grid.limbs}
        return "polysum", params, arrays

    @classmethod
    def from_state(cls, params: dict, arrays: Dict[str, np.ndarray]) -> "PolySumSketch":
        settings = get_settings().model_copy(update={"fixed_point_scale": int(params["scale"])})
        sketch = cls(
            arrays["x"],
            n=params["n"],
            p=params["p"],
            epsilon=params["epsilon"],
            copies=params["copies"],
            rows=params["rows"],
            width=params["width"],
            seed=params["seed"],
            settings=settings,
        )
        sketch.meta.m = int(params["m"])
        sketch.grid.limbs[...] = arrays["limbs"]
        return sketch


# =============================================================================
# Operations
# =============================================================================

def polysum_init(x: np.ndarray, n: int, p: float, epsilon: float, **kwargs) -> PolySumSketch:
    """Two count-sketch sub-sketches (x+ and x-) with copies_k = ceil(16 / eps^2)."""
    return PolySumSketch(x, n=n, p=p, epsilon=epsilon, **kwargs)


def polysum_update(s: PolySumSketch, coord: int, delta: float) -> PolySumSketch:
    return s.update(coord, delta)


def polysum_query(s: PolySumSketch) -> float:
    return s.query()
