"""Sketches of f(A) B for a stream-updated A and a fixed B."""

from app.matprod.sketch import (
    MatrixProductSketch,
    ProductEstimate,
    RowNormSketch,
    SpaceReport,
    matprod_init,
    matprod_query,
    matprod_update,
    rownorm_query,
)

__all__ = [
    "MatrixProductSketch",
    "ProductEstimate",
    "RowNormSketch",
    "SpaceReport",
    "matprod_init",
    "matprod_query",
    "matprod_update",
    "rownorm_query",
]
