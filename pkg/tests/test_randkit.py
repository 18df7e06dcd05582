"""Tests for the seedable randomness primitives.

Covers:
1. Polynomial hash families: determinism, range, universe checks
2. Subsampling decisions and their empirical rate
3. Keyed mixing and keyed uniforms
4. The p-inverse sampler and its tail
"""

import sys
sys.path.insert(0, ".")

import numpy as np
import pytest

from app.errors import ConfigError, DomainError
from app.randkit import (
    HashFamily,
    PInverseSampler,
    default_degree,
    hash_eval,
    keyed_mix,
    keyed_uniform,
    next_prime,
    pinverse_draw,
    subsample_decision,
    subsample_mask,
)


def test_next_prime_and_degree():
    """Test prime search and the default independence level."""
    print("Testing next_prime / default_degree...")

    assert next_prime(2) == 2
    assert next_prime(14) == 17, "next prime after 14 is 17"
    assert next_prime(2 ** 31) == 2147483659, "first prime past 2^31"
    assert default_degree(1) == 2, "degree never drops below pairwise"
    assert default_degree(1024) == 10

    print("  ✓ Primes and degrees correct")


def test_hash_family_deterministic():
    """Same (seed, degree, key) always hashes to the same value."""
    print("Testing hash determinism...")

    keys = np.arange(1000)
    a = HashFamily(seed=7, degree=4, universe=1000).evaluate(keys)
    b = HashFamily(seed=7, degree=4, universe=1000).evaluate(keys)
    c = HashFamily(seed=8, degree=4, universe=1000).evaluate(keys)

    assert np.array_equal(a, b), "Hash not reproducible for equal seeds"
    assert not np.array_equal(a, c), "Different seeds gave identical hashes"
    family = HashFamily(seed=7, degree=4, universe=1000)
    assert a.min() >= 0 and a.max() < family.prime_modulus, "Hash out of [0, P)"
    assert hash_eval(family, 17) == int(a[17]), "Scalar and vector evaluation disagree"

    print("  ✓ Hashes deterministic and in range")


def test_hash_family_validation():
    """Bad parameters and out-of-universe keys are rejected."""
    print("Testing hash validation...")

    with pytest.raises(ConfigError):
        HashFamily(seed=0, degree=0, universe=10)
    with pytest.raises(ConfigError):
        HashFamily(seed=0, degree=2, universe=100, prime_modulus=91)  # 7 * 13
    with pytest.raises(ConfigError):
        HashFamily(seed=0, degree=2, universe=100, prime_modulus=97 - 14)

    family = HashFamily(seed=0, degree=2, universe=100, prime_modulus=101)
    with pytest.raises(DomainError):
        hash_eval(family, 100)
    with pytest.raises(DomainError):
        family.evaluate(np.array([-1]))

    print("  ✓ Invalid parameters rejected")


def test_degree_one_is_constant():
    """A single coefficient gives a constant function."""
    print("Testing degree-1 hash...")

    family = HashFamily(seed=3, degree=1, universe=50)
    values = family.evaluate(np.arange(50))
    assert np.unique(values).size == 1, "Degree-1 hash is not constant"

    print("  ✓ Degree-1 hash constant")


def test_subsampling_rate():
    """Empirical keep rate tracks the requested probability."""
    print("Testing subsampling rate...")

    n = 200_000
    family = HashFamily(seed=11, degree=4, universe=n)
    keys = np.arange(n)
    for prob in (0.5, 0.1, 0.01):
        rate = subsample_mask(family, keys, prob).mean()
        assert abs(rate - prob) < 5 * np.sqrt(prob / n) + 1e-3, f"rate {rate} far from {prob}"

    assert subsample_mask(family, keys[:10], 1.0).all(), "prob >= 1 must keep everything"
    assert subsample_mask(family, keys[:10], 3.5).all()
    assert subsample_decision(family, 5, 0.5) == subsample_decision(family, 5, 0.5)
    with pytest.raises(ConfigError):
        subsample_mask(family, keys[:10], 0.0)

    print("  ✓ Keep rate within tolerance")


def test_subsampling_nested():
    """Smaller probabilities keep a subset of larger ones under one hash."""
    print("Testing nested subsampling...")

    family = HashFamily(seed=5, degree=3, universe=10_000)
    keys = np.arange(10_000)
    coarse = subsample_mask(family, keys, 0.4)
    fine = subsample_mask(family, keys, 0.1)
    assert not (fine & ~coarse).any(), "Finer sample escaped the coarser one"

    print("  ✓ Samples nested")


def test_keyed_uniform():
    """Keyed uniforms are reproducible, in (0, 1], and roughly uniform."""
    print("Testing keyed uniforms...")

    i = np.arange(50_000)
    u = keyed_uniform(99, i, 3)
    assert np.array_equal(u, keyed_uniform(99, i, 3)), "Keyed uniforms not reproducible"
    assert (u > 0).all() and (u <= 1).all(), "Uniforms outside (0, 1]"
    assert abs(u.mean() - 0.5) < 0.01, f"Mean {u.mean()} not near 1/2"
    assert not np.array_equal(keyed_mix(1, i), keyed_mix(2, i)), "Seed ignored by keyed_mix"
    assert keyed_mix(1, np.arange(3)[:, None], np.arange(4)[None, :]).shape == (3, 4)

    print("  ✓ Keyed uniforms behave")


def test_pinverse_tail():
    """Pr[z >= x] = x^-p for the p-inverse sampler."""
    print("Testing p-inverse tail...")

    for p in (0.5, 1.0, 2.0):
        sampler = PInverseSampler(seed=21, p=p)
        z = sampler.draw(np.arange(100_000), 0)
        assert (z >= 1.0).all(), "p-inverse draws must be >= 1"
        for x in (2.0, 4.0):
            tail = (z >= x).mean()
            assert abs(tail - x ** -p) < 0.01, f"p={p}: Pr[z>={x}]={tail}, expected {x ** -p}"

    sampler = PInverseSampler(seed=21, p=1.0)
    assert pinverse_draw(sampler, 4, 2) == float(sampler.draw(4, 2))
    with pytest.raises(ConfigError):
        PInverseSampler(seed=0, p=2.5)
    with pytest.raises(ConfigError):
        PInverseSampler(seed=0, p=0.0)

    print("  ✓ Tails match x^-p")


def run_all_tests():
    """Run all randomness tests."""
    print("\n" + "=" * 60)
    print("Running Randomness Primitive Tests")
    print("=" * 60 + "\n")

    tests = [
        test_next_prime_and_degree,
        test_hash_family_deterministic,
        test_hash_family_validation,
        test_degree_one_is_constant,
        test_subsampling_rate,
        test_subsampling_nested,
        test_keyed_uniform,
        test_pinverse_tail,
    ]

    passed = 0
    failed = 0

    for test in tests:
        try:
            test()
            passed += 1
        except AssertionError as e:
            print(f"  ✗ FAILED: {e}")
            failed += 1
        except Exception as e:
            print(f"  ✗ ERROR: {type(e).__name__}: {e}")
            failed += 1

    print("\n" + "=" * 60)
    print(f"Results: {passed} passed, {failed} failed")
    print("=" * 60)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
