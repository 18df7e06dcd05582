"""Numeric guardrails for stream updates.

Keeps bad values out of the sketches before they can corrupt exact
integer state:

Design principles:
- Reject non-finite deltas and out-of-range indices at the boundary.
- Real deltas become exact int64 fixed-point values (default scale 2^20).
- Sanity caps keep fixed-point values far from int64 overflow.
"""

from __future__ import annotations

import numpy as np

from app.errors import DomainError

# =============================================================================
# Sanity Caps
# =============================================================================
MAX_FIXED_POINT_MAGNITUDE = float(2 ** 62)   # per single update, after scaling
DEFAULT_FIXED_POINT_SCALE = 2 ** 20


def check_indices(rows: np.ndarray, cols: np.ndarray, n_rows: int, n_cols: int) -> None:
    """Raise DomainError if any (row, col) lies outside [0, n_rows) x [0, n_cols)."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if rows.size == 0:
        return
    if rows.min() < 0 or rows.max() >= n_rows:
        raise DomainError(f"Row index out of range [0, {n_rows})")
    if cols.min() < 0 or cols.max() >= n_cols:
        raise DomainError(f"Column index out of range [0, {n_cols})")


def check_deltas(deltas: np.ndarray, allow_zero: bool = True) -> np.ndarray:
    """Return deltas as float64, rejecting NaN/inf (and zeros unless allowed)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size and not np.isfinite(deltas).all():
        raise DomainError("Update deltas must be finite")
    if not allow_zero and deltas.size and (deltas == 0).any():
        raise DomainError("Update deltas must be nonzero")
    return deltas


def to_fixed_point(deltas: np.ndarray, scale: int = DEFAULT_FIXED_POINT_SCALE) -> np.ndarray:
    """Round deltas * scale to int64.

    Raises:
        DomainError: On non-finite deltas or values past the sanity cap
    """
    deltas = check_deltas(deltas)
    scaled = np.rint(deltas * float(scale))
    if scaled.size and np.abs(scaled).max() >= MAX_FIXED_POINT_MAGNITUDE:
        raise DomainError(f"Delta too large for fixed-point scale {scale}")
    return scaled.astype(np.int64)


def from_fixed_point(values: np.ndarray, scale: int = DEFAULT_FIXED_POINT_SCALE) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / float(scale)


def is_exact_fixed_point(deltas: np.ndarray, scale: int = DEFAULT_FIXED_POINT_SCALE) -> bool:
    """True when every delta is an integer multiple of 1/scale."""
    scaled = np.asarray(deltas, dtype=np.float64) * float(scale)
    return bool(np.all(scaled == np.rint(scaled)))
