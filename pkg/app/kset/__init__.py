"""Exact sparse recovery under turnstile updates (K-Set)."""

from app.kset.kset import (
    BankRecovery,
    KSet,
    KSetBank,
    SparseVector,
    default_rows,
    kset_query,
    kset_update,
)

__all__ = [
    "BankRecovery",
    "KSet",
    "KSetBank",
    "SparseVector",
    "default_rows",
    "kset_query",
    "kset_update",
]
