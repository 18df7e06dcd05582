"""
Matrix product sketch: maintain Z ~ f(A) B where A (n_rows x n_cols)
arrives as turnstile updates and B (n_cols x k) is fixed.

Cell (i, j) estimates <B[:, j], f(A[i, :])>, so an update to A[i, a]
touches only row i's cells, at coordinate a.

Layouts:
- per_cell    one vector sketch per (i, j). LogSum cells skip coordinates
              with B[a, j] = 0. For f = |x|^p the cells are PolySum sketches.
- row_shared  one levelled sample per row i, shared by all k columns; the
              weights B are applied at query time, so B may be any real
              matrix and k may be large.

Failed cells are returned as 0 and flagged in a mask instead of aborting
the query.

Features:
- space_report(): allocated bytes (cells, mass counters, hash seeds),
  nominal bytes (capacity per sketch, the expected sample payload) and
  occupied bytes (samples held at the answering level)
- RowNormSketch: B = ones column and f replaced by f^2
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import sparse

from app.config import Settings, get_settings
from app.errors import ConfigError, DomainError
from app.fsketch.logsum import (
    LevelledSampleGrid,
    LevelSelection,
    level_probabilities,
    logsum_capacity,
    logsum_gamma,
    logsum_levels,
    validate_accuracy,
)
from app.fsketch.polysum import PolySumGrid, polysum_copies, polysum_rows, polysum_width
from app.fsketch.serialization import register_loader
from app.fsketch.transforms import EntrywiseTransform, parse_transform
from app.streams.numeric_guards import check_deltas, check_indices, from_fixed_point, to_fixed_point

logger = logging.getLogger(__name__)

LAYOUTS = ("per_cell", "row_shared")
ENGINES = ("sampled", "polysum")


# =============================================================================
# Reports
# =============================================================================

@dataclass
class SpaceReport:
    """Byte accounting for one sketch (the fixed matrix B is not counted)."""
    allocated_bytes: int = 0
    nominal_bytes: int = 0
    occupied_bytes: int = 0

    def __add__(self, other: "SpaceReport") -> "SpaceReport":
        return SpaceReport(
            allocated_bytes=self.allocated_bytes + other.allocated_bytes,
            nominal_bytes=self.nominal_bytes + other.nominal_bytes,
            occupied_bytes=self.occupied_bytes + other.occupied_bytes,
        )


@dataclass
class ProductEstimate:
    """Estimated f(A) B with a mask of cells whose sketch failed (set to 0)."""
    values: np.ndarray
    failed: np.ndarray

    @property
    def failed_count(self) -> int:
        return int(self.failed.sum())


# =============================================================================
# Matrix product sketch
# =============================================================================

class MatrixProductSketch:
    """
    Grid of vector sketches estimating every entry of f(A) B.
    """

    def __init__(
        self,
        B: np.ndarray,
        transform: EntrywiseTransform,
        epsilon: float = 0.25,
        delta: float = 0.01,
        *,
        n_rows: Optional[int] = None,
        layout: str = "per_cell",
        engine: Optional[str] = None,
        allow_real_weights: bool = False,
        capacity: Optional[int] = None,
        gamma: Optional[float] = None,
        seed: Optional[int] = None,
        copies: Optional[int] = None,
        width: Optional[int] = None,
        settings: Optional[Settings] = None,
    ):
        """
        Args:
            B: Fixed n_cols x k matrix (sign entries unless real weights are allowed)
            transform: Entrywise f
            epsilon: Accuracy target
            delta: Overall failure probability, split evenly over n_rows * k cells
            n_rows: Rows of A (defaults to n_cols, i.e. square A)
            layout: "per_cell" or "row_shared"
            engine: "sampled" (levelled K-Sets) or "polysum"; default picks
                polysum for |x|^p in the per_cell layout, sampled otherwise
            allow_real_weights: Accept non-sign B in the per_cell layout
            capacity: K-Set budget override for the sampled engine
            gamma: Oversampling override for the sampled engine
            seed: Seed (defaults to FSKETCH_SEED)
            copies: PolySum copies_k override
            width: PolySum count-sketch width override

        Raises:
            ConfigError: On an unknown layout/engine or bad accuracy targets
            DomainError: If B is not 2-D, or has non-sign entries where they are not allowed
        """
        settings = settings or get_settings()
        validate_accuracy(epsilon, delta)
        B = np.asarray(B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] < 1 or B.shape[1] < 1:
            raise DomainError(f"B must be a non-empty 2-D matrix, got shape {B.shape}")
        if layout not in LAYOUTS:
            raise ConfigError(f"layout must be one of {LAYOUTS}, got '{layout}'")
        if layout == "per_cell" and not allow_real_weights and not np.isin(B, (-1.0, 0.0, 1.0)).all():
            raise DomainError("B must have entries in {-1, 0, 1}; pass allow_real_weights=True for real B")
        if engine is None:
            engine = "polysum" if (transform.kind == "poly" and layout == "per_cell") else "sampled"
        if engine not in ENGINES or (engine == "polysum" and (layout != "per_cell" or transform.kind != "poly")):
            raise ConfigError(f"engine '{engine}' is not available for layout '{layout}' and f={transform.spec}")

        self.B = B
        self.transform = transform
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.n_cols, self.k = B.shape
        self.n_rows = int(n_rows if n_rows is not None else self.n_cols)
        self.layout = layout
        self.engine = engine
        self.allow_real_weights = bool(allow_real_weights)
        self.seed = int(settings.seed if seed is None else seed)
        self.scale = settings.fixed_point_scale
        self.word_bytes = settings.word_bytes
        self.cell_delta = self.delta / (self.n_rows * self.k)
        self.updates_seen = 0
        self.last_selection: Optional[LevelSelection] = None
        self._occupied_entries = 0

        num_streams = self.n_rows * self.k if layout == "per_cell" else self.n_rows
        if engine == "sampled":
            self.capacity = int(capacity or logsum_capacity(self.n_cols, epsilon, self.cell_delta, settings))
            self.gamma = float(gamma or logsum_gamma(self.n_cols, epsilon, self.cell_delta, settings))
            self.grid = LevelledSampleGrid(
                num_streams=num_streams,
                universe=self.n_cols,
                probabilities=level_probabilities(self.gamma, logsum_levels(self.n_cols)),
                capacity_k=self.capacity,
                fail_prob=self.cell_delta,
                seed=self.seed,
                settings=settings,
            )
        else:
            self.capacity = None
            self.gamma = None
            self.grid = PolySumGrid(
                num_cells=num_streams,
                universe=self.n_cols,
                p=transform.p,
                copies=int(copies or polysum_copies(epsilon, settings)),
                rows=polysum_rows(self.n_cols),
                width=int(width or polysum_width(self.n_cols, epsilon, settings)),
                seed=self.seed,
                weight_bound=float(np.abs(B).max()) ** (1.0 / transform.p),
                scale=self.scale,
            )
        logger.debug(
            f"MatrixProductSketch: {self.n_rows}x{self.n_cols} A, k={self.k}, layout={layout}, "
            f"engine={engine}, K={self.capacity}, streams={num_streams}"
        )

    @property
    def cell_count(self) -> int:
        """Number of logical (i, j) sketches."""
        return self.n_rows * self.k

    # -------------------------------------------------------------------------
    # Updates
    # -------------------------------------------------------------------------

    def update(self, i: int, j: int, delta: float) -> "MatrixProductSketch":
        return self.update_many(np.asarray([i]), np.asarray([j]), np.asarray([delta], dtype=np.float64))

    def update_many(self, rows: np.ndarray, cols: np.ndarray, deltas: np.ndarray) -> "MatrixProductSketch":
        """A[rows[t], cols[t]] += deltas[t] for all t.

        Raises:
            DomainError: If an index is out of range
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        deltas = check_deltas(deltas)
        check_indices(rows, cols, self.n_rows, self.n_cols)
        self.updates_seen += int(rows.size)
        self.last_selection = None
        if rows.size == 0:
            return self

        if self.layout == "row_shared":
            self.grid.update(rows, cols, to_fixed_point(deltas, self.scale))
            return self

        which, column = np.nonzero(self.B[cols] != 0)
        cells = rows[which] * self.k + column
        if self.engine == "sampled":
            self.grid.update(cells, cols[which], to_fixed_point(deltas, self.scale)[which])
        else:
            self.grid.update(cells, cols[which], self.B[cols[which], column], to_fixed_point(deltas, self.scale)[which])
        return self

    # -------------------------------------------------------------------------
    # Queries
    # -------------------------------------------------------------------------

    def _sampled_values(self, selection: LevelSelection) -> np.ndarray:
        """f(v) / p for every recovered entry at its stream's chosen level."""
        streams = selection.entry_streams
        fv = self.transform.apply(from_fixed_point(selection.values, self.scale))
        return fv / selection.prob[streams]

    def sample_matrix(self) -> sparse.csr_matrix:
        """Scaled samples f(v)/p as a sparse (streams x n_cols) matrix; needs a prior query."""
        selection = self._require_selection()
        return sparse.csr_matrix(
            (self._sampled_values(selection), selection.indices, selection.indptr),
            shape=(selection.level.size, self.n_cols),
        )

    def squared_row_sums(self) -> ProductEstimate:
        """sum_a f(A[i, a])^2 / p per stream from the same sample (row_shared layout only)."""
        if self.layout != "row_shared":
            raise ConfigError("squared_row_sums needs the row_shared layout")
        selection = self._require_selection()
        fv = self.transform.apply(from_fixed_point(selection.values, self.scale))
        weights = fv ** 2 / selection.prob[selection.entry_streams]
        values = np.bincount(selection.entry_streams, weights=weights, minlength=self.n_rows)
        values[selection.failed] = 0.0
        return ProductEstimate(values=values, failed=selection.failed.copy())

    def _require_selection(self) -> LevelSelection:
        if self.last_selection is None:
            self.query()
        return self.last_selection

    def query(self) -> ProductEstimate:
        """Estimate every cell; failed cells are 0 and flagged."""
        if self.engine == "polysum":
            values = np.zeros((self.n_rows, self.k), dtype=np.float64)
            for j in range(self.k):
                cells = np.arange(self.n_rows, dtype=np.int64) * self.k + j
                values[:, j] = self.grid.estimate(cells, self.B[:, j])
            self._occupied_entries = 0
            return ProductEstimate(values=values, failed=np.zeros_like(values, dtype=bool))

        selection = self.grid.select()
        self.last_selection = selection
        self._occupied_entries = int(selection.indices.size)
        if self.layout == "row_shared":
            values = np.asarray(self.sample_matrix() @ self.B)
            failed = np.repeat(selection.failed[:, None], self.k, axis=1)
        else:
            streams = selection.entry_streams
            weights = self.B[selection.indices, streams % self.k] * self._sampled_values(selection)
            values = np.bincount(streams, weights=weights, minlength=self.cell_count).reshape(self.n_rows, self.k)
            failed = selection.failed.reshape(self.n_rows, self.k)
        values[failed] = 0.0
        if failed.any():
            logger.warning(f"Matrix product query: {int(failed.sum())} of {failed.size} cells failed, set to 0")
        return ProductEstimate(values=values, failed=failed)

    # -------------------------------------------------------------------------
    # Accounting
    # -------------------------------------------------------------------------

    def space_report(self) -> SpaceReport:
        allocated = int(self.grid.nbytes)
        if self.engine == "polysum":
            return SpaceReport(allocated_bytes=allocated, nominal_bytes=allocated, occupied_bytes=allocated)
        return SpaceReport(
            allocated_bytes=allocated,
            nominal_bytes=self.grid.num_streams * self.capacity * self.word_bytes,
            occupied_bytes=self._occupied_entries * self.word_bytes,
        )

    # -------------------------------------------------------------------------
    # Serialization hooks
    # -------------------------------------------------------------------------

    def to_state(self) -> tuple:
        params = {
            "transform": self.transform.spec,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "n_rows": self.n_rows,
            "layout": self.layout,
            "engine": self.engine,
            "allow_real_weights": self.allow_real_weights,
            "capacity": self.capacity,
            "gamma": self.gamma,
            "seed": self.seed,
            "scale": self.scale,
            "updates_seen": self.updates_seen,
        }
        arrays: Dict[str, np.ndarray] = {"B": self.B}
        if self.engine == "sampled":
            arrays.update(self.grid.bank.state_arrays())
        else:
            arrays["limbs"] = self.grid.limbs
            params.update({"copies": self.grid.copies_k, "width": self.grid.width})
        return "matprod", params, arrays

    @classmethod
    def from_state(cls, params: dict, arrays: Dict[str, np.ndarray]) -> "MatrixProductSketch":
        settings = get_settings().model_copy(update={"fixed_point_scale": int(params["scale"])})
        sketch = cls(
            arrays["B"],
            parse_transform(params["transform"]),
            epsilon=params["epsilon"],
            delta=params["delta"],
            n_rows=params["n_rows"],
            layout=params["layout"],
            engine=params["engine"],
            allow_real_weights=params["allow_real_weights"],
            capacity=params["capacity"],
            gamma=params["gamma"],
            seed=params["seed"],
            copies=params.get("copies"),
            width=params.get("width"),
            settings=settings,
        )
        sketch.updates_seen = int(params["updates_seen"])
        if sketch.engine == "sampled":
            sketch.grid.bank.load_state_arrays(arrays)
        else:
            sketch.grid.limbs[...] = arrays["limbs"]
        return sketch


register_loader("matprod", MatrixProductSketch.from_state)


# =============================================================================
# Row norms
# =============================================================================

class RowNormSketch:
    """
    Squared row norms of f(A): a k = 1 product sketch with B = 1 and f -> f^2.
    """

    def __init__(
        self,
        transform: EntrywiseTransform,
        n_cols: int,
        epsilon: float = 0.25,
        delta: float = 0.01,
        **kwargs,
    ):
        """
        Raises:
            ConfigError: If f^2 is not admissible (|x|^p with p > 1)
        """
        if n_cols < 1:
            raise ConfigError(f"n_cols must be >= 1, got {n_cols}")
        self.transform = transform
        self.inner = MatrixProductSketch(
            np.ones((n_cols, 1)), transform.squared(), epsilon, delta, **kwargs
        )

    def update(self, i: int, j: int, delta: float) -> "RowNormSketch":
        self.inner.update(i, j, delta)
        return self

    def update_many(self, rows: np.ndarray, cols: np.ndarray, deltas: np.ndarray) -> "RowNormSketch":
        self.inner.update_many(rows, cols, deltas)
        return self

    def query(self) -> ProductEstimate:
        estimate = self.inner.query()
        return ProductEstimate(values=estimate.values[:, 0], failed=estimate.failed[:, 0])

    def space_report(self) -> SpaceReport:
        return self.inner.space_report()


# =============================================================================
# Operations
# =============================================================================

def matprod_init(B: np.ndarray, f: EntrywiseTransform, epsilon: float, delta: float, **kwargs) -> MatrixProductSketch:
    """Allocate n * k cell sketches, each with failure probability delta / (n * k)."""
    return MatrixProductSketch(B, f, epsilon, delta, **kwargs)


def matprod_update(s: MatrixProductSketch, i: int, j: int, delta: float) -> MatrixProductSketch:
    """A[i, j] += delta; touches only row i's cells."""
    return s.update(i, j, delta)


def matprod_query(s: MatrixProductSketch) -> ProductEstimate:
    return s.query()


def rownorm_query(s: RowNormSketch) -> np.ndarray:
    """z_i ~ sum_j f^2(A[i, j]) for every row i (failed rows are 0)."""
    return s.query().values
