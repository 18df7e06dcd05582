"""Tests for K-Set exact sparse recovery.

Covers:
1. Exact recovery below capacity, including negative values
2. Fail (None) above capacity
3. Insert-then-delete returns to the empty vector
4. Banks of independent sets and batched queries
5. Input validation and state export/import
6. Rejected overflowing updates leave the state untouched
"""

import sys
sys.path.insert(0, ".")

import numpy as np
import pytest

from app.errors import ConfigError, DomainError, KSetOverflowError
from app.kset import KSet, KSetBank, default_rows, kset_query, kset_update


def test_exact_recovery_small_support():
    """Support within capacity is recovered exactly."""
    print("Testing exact recovery...")

    kset = KSet(capacity_k=16, universe=10_000, fail_prob=0.01, seed=3)
    expected = {5: 3, 77: -2, 4096: 11, 9999: 1}
    for coord, value in expected.items():
        # Split each value over several updates.
        kset_update(kset, coord, value - 1)
        kset_update(kset, coord, 1)

    vector = kset_query(kset)
    assert vector is not None, "K-Set failed below capacity"
    got = vector.to_dict()
    expected = {c: v for c, v in expected.items() if v != 0}
    assert got == expected, f"Recovered {got}, expected {expected}"
    assert list(vector.indices) == sorted(expected), "Indices not sorted"
    assert len(vector) == 4

    print("  ✓ Exact values recovered")


def test_fail_above_capacity():
    """Support far beyond capacity reports Fail."""
    print("Testing Fail above capacity...")

    kset = KSet(capacity_k=4, universe=1000, seed=1)
    kset.update_many(np.arange(0, 400, 4), np.ones(100, dtype=np.int64))
    assert kset_query(kset) is None, "K-Set returned a vector for support 100 > K=4"

    print("  ✓ Fail reported")


def test_cancellation_returns_empty():
    """Inserting and deleting the same updates leaves an empty set."""
    print("Testing cancellation...")

    rng = np.random.default_rng(0)
    coords = rng.integers(0, 5000, size=300)
    deltas = rng.integers(-5, 6, size=300)
    kset = KSet(capacity_k=8, universe=5000, seed=9)
    kset.update_many(coords, deltas)
    kset.update_many(coords, -deltas)

    vector = kset.query()
    assert vector is not None, "Empty set reported Fail"
    assert len(vector) == 0, f"Expected empty support, got {vector.to_dict()}"
    count, index_sum, fingerprint_sum = kset.cells
    assert not count.any() and not index_sum.any() and not fingerprint_sum.any(), "Cells not zero"

    print("  ✓ Empty after cancellation")


def test_shrinking_support_recovers():
    """A set that overflowed recovers once deletions bring it under capacity."""
    print("Testing recovery after deletions...")

    kset = KSet(capacity_k=5, universe=2000, seed=4)
    coords = np.arange(100, 160)
    kset.update_many(coords, np.full(60, 2, dtype=np.int64))
    assert kset.query() is None

    kset.update_many(coords[3:], np.full(57, -2, dtype=np.int64))
    vector = kset.query()
    assert vector is not None, "K-Set did not recover after shrinking"
    assert vector.to_dict() == {100: 2, 101: 2, 102: 2}

    print("  ✓ Recovered after deletions")


def test_bank_independent_sets():
    """Sets in a bank decode independently; a failing set does not spoil others."""
    print("Testing K-Set bank...")

    bank = KSetBank(num_sets=3, capacity_k=6, universe=1000, seed=12)
    bank.update(np.zeros(3, dtype=np.int64), np.array([1, 2, 3]), np.array([4, 5, 6]))
    bank.update(np.ones(200, dtype=np.int64), np.arange(200), np.ones(200, dtype=np.int64))
    bank.update(np.full(2, 2, dtype=np.int64), np.array([999, 0]), np.array([-7, 7]))

    result = bank.query()
    assert list(result.ok) == [True, False, True], f"ok flags {result.ok}"
    assert result.vector(0).to_dict() == {1: 4, 2: 5, 3: 6}
    assert result.vector(1) is None
    assert result.vector(2).to_dict() == {0: 7, 999: -7}
    assert list(result.entry_sets) == [0, 0, 0, 2, 2]

    subset = bank.query(np.array([2]))
    assert subset.vector(0).to_dict() == {0: 7, 999: -7}, "Batched query lost a set"

    print("  ✓ Bank sets independent")


def test_query_does_not_mutate():
    """Querying twice gives the same answer and leaves the cells untouched."""
    print("Testing query is read-only...")

    decoded = 0
    for seed in range(10):
        kset = KSet(capacity_k=10, universe=300, seed=seed)
        kset.update_many(np.array([10, 20, 30]), np.array([1, -1, 2]))
        before = [c.copy() for c in kset.cells]
        first = kset.query()
        second = kset.query()
        for a, b in zip(before, kset.cells):
            assert np.array_equal(a, b), f"seed={seed}: query modified the cells"
        if first is None:
            assert second is None, f"seed={seed}: repeated query changed the outcome"
            continue
        decoded += 1
        assert first.to_dict() == second.to_dict() == {10: 1, 20: -1, 30: 2}
    assert decoded >= 8, f"Only {decoded} of 10 seeds decoded a 3-element support"

    print(f"  ✓ Query is read-only ({decoded}/10 seeds decoded)")


def test_overflow_leaves_state_unchanged():
    """A rejected update changes neither the mass counters nor the cells."""
    print("Testing overflow rejection...")

    bank = KSetBank(num_sets=2, capacity_k=4, universe=10, seed=1)
    bank.update(np.array([0]), np.array([1]), np.array([5]))
    before = {name: array.copy() for name, array in bank.state_arrays().items()}
    with pytest.raises(KSetOverflowError):
        bank.update(np.array([1, 0]), np.array([2, 3]), np.array([2 ** 62, 1], dtype=np.int64))
    for name, array in bank.state_arrays().items():
        assert np.array_equal(array, before[name]), f"Rejected update changed '{name}'"

    bank.update(np.array([1]), np.array([2]), np.array([3]))
    result = bank.query()
    assert result.vector(0).to_dict() == {1: 5}
    assert result.vector(1).to_dict() == {2: 3}
    assert list(bank.state_arrays()["mass"]) == [5.0, 3.0]

    print("  ✓ Overflow rejected cleanly")



def test_validation():
    """Bad sizes, coordinates and non-integer deltas are rejected."""
    print("Testing K-Set validation...")

    with pytest.raises(ConfigError):
        KSet(capacity_k=0, universe=10)
    with pytest.raises(ConfigError):
        KSet(capacity_k=2, universe=10, fail_prob=1.5)

    kset = KSet(capacity_k=2, universe=10)
    with pytest.raises(DomainError):
        kset.update(10, 1)
    with pytest.raises(DomainError):
        kset.update_many(np.array([1]), np.array([0.5]))

    bank = KSetBank(num_sets=2, capacity_k=2, universe=10)
    with pytest.raises(DomainError):
        bank.update(np.array([2]), np.array([1]), np.array([1]))

    print("  ✓ Invalid input rejected")


def test_state_round_trip_and_sizing():
    """Exported cell arrays rebuild an identical bank; sizes follow the parameters."""
    print("Testing state export and sizing...")

    bank = KSetBank(num_sets=2, capacity_k=8, universe=500, seed=6)
    bank.update(np.array([0, 1, 1]), np.array([4, 5, 6]), np.array([1, 2, 3]))
    clone = KSetBank(num_sets=2, capacity_k=8, universe=500, seed=6)
    clone.load_state_arrays(bank.state_arrays())
    assert clone.query().vector(1).to_dict() == {5: 2, 6: 3}

    assert bank.width == 12, "Width should be ceil(1.5 K)"
    assert bank.rows == default_rows(8, 0.01)
    assert bank.cell_count == 2 * bank.rows * bank.width
    assert bank.nbytes >= bank.cell_count * 3 * 8

    print("  ✓ State and sizing consistent")


def run_all_tests():
    """Run all K-Set tests."""
    print("\n" + "=" * 60)
    print("Running K-Set Tests")
    print("=" * 60 + "\n")

    tests = [
        test_exact_recovery_small_support,
        test_fail_above_capacity,
        test_cancellation_returns_empty,
        test_shrinking_support_recovers,
        test_bank_independent_sets,
        test_query_does_not_mutate,
        test_overflow_leaves_state_unchanged,
        test_validation,
        test_state_round_trip_and_sizing,
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
