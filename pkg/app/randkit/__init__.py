"""Seedable randomness primitives: polynomial hash families, keyed mixing and the p-inverse sampler."""

from app.randkit.hashing import (
    HashFamily,
    default_degree,
    hash_eval,
    keyed_mix,
    keyed_uniform,
    next_prime,
    subsample_decision,
    subsample_mask,
)
from app.randkit.pinverse import PInverseSampler, pinverse_draw

__all__ = [
    "HashFamily",
    "PInverseSampler",
    "default_degree",
    "hash_eval",
    "keyed_mix",
    "keyed_uniform",
    "next_prime",
    "pinverse_draw",
    "subsample_decision",
    "subsample_mask",
]
