"""Tests for sketch-and-solve regression on a streamed, transformed design.

Covers:
1. Sketch size rule and config validation
2. Consistent systems are solved exactly in exact and sketch modes
3. Noisy systems stay near the least-squares optimum
4. Rank-deficient designs are flagged
5. Spectral normalization
6. Input validation
"""

import sys
sys.path.insert(0, ".")

import numpy as np
import pytest

from app.errors import ConfigError, DomainError
from app.regress import RegressionConfig, regress_solve
from app.streams import stream_from_dense


def _design(n=40, d=3, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.5, 5.0, size=(n, d))
    stream, A = stream_from_dense(A, updates_per_entry=2, seed=seed)
    return stream, A, np.log1p(np.abs(A))


def test_sketch_rows_rule():
    """s = max(d, ceil(c_r d^2 / eps^2)) unless sketch_rows is given."""
    print("Testing regression sketch size...")

    assert RegressionConfig.build(d=3).s == 576
    assert RegressionConfig.build(d=3, epsilon=0.5, c_r=1.0).s == 36
    assert RegressionConfig.build(d=5, sketch_rows=2).s == 5, "s never drops below d"
    for bad in (dict(d=0), dict(d=2, epsilon=0.0), dict(d=2, transform_kind="srht")):
        with pytest.raises(ConfigError):
            RegressionConfig.build(**bad)

    print("  ✓ Sketch size rule OK")


def test_consistent_system_exact_mode():
    """When b lies in the range of f(A) the sketched solution is exact."""
    print("Testing consistent system in exact mode...")

    stream, _, M = _design()
    x_true = np.array([1.5, -2.0, 0.5])
    cfg = RegressionConfig.build(d=3, sketch_rows=12, mode="exact", seed=1)
    result = regress_solve(stream, M @ x_true, cfg)

    assert np.allclose(result.x, x_true, atol=1e-8), f"Got {result.x}"
    assert not result.rank_deficient
    assert result.sketch_rows == 12
    assert result.sketched_residual < 1e-8

    print("  ✓ Exact solution recovered")


@pytest.mark.parametrize("kind", ["gaussian", "countsketch"])
def test_consistent_system_sketch_mode(kind):
    """Lossless product sketches give the same answer from one pass."""
    print(f"Testing consistent system in sketch mode ({kind})...")

    stream, _, M = _design(seed=2)
    x_true = np.array([-1.0, 0.25, 3.0])
    cfg = RegressionConfig.build(d=3, sketch_rows=16, transform_kind=kind, budget=40, gamma=1e4, seed=3)
    result = regress_solve(stream, M @ x_true, cfg)

    assert np.allclose(result.x, x_true, atol=1e-6), f"Got {result.x}"
    assert result.failed_columns == 0
    assert result.space.nominal_bytes > 0
    assert stream.passes >= 1

    print("  ✓ Sketch mode solution exact")


def test_noisy_system_near_optimum():
    """The sketched residual on the full problem is within a small factor of optimal."""
    print("Testing noisy regression...")

    stream, _, M = _design(n=200, d=2, seed=4)
    rng = np.random.default_rng(5)
    b = M @ np.array([2.0, -1.0]) + rng.normal(scale=0.5, size=200)
    optimal = np.linalg.norm(M @ np.linalg.lstsq(M, b, rcond=None)[0] - b)

    cfg = RegressionConfig.build(d=2, epsilon=0.5, c_r=8.0, mode="exact", seed=6)
    result = regress_solve(stream, b, cfg)
    achieved = np.linalg.norm(M @ result.x - b)
    assert achieved <= 1.5 * optimal, f"Residual {achieved:.3f} vs optimal {optimal:.3f}"

    print(f"  ✓ Residual ratio {achieved / optimal:.3f}")


def test_rank_deficient_flag():
    """Duplicated design columns return the minimum-norm solution with a flag."""
    print("Testing rank-deficient design...")

    rng = np.random.default_rng(7)
    col = rng.uniform(1.0, 4.0, size=(30, 1))
    stream, A = stream_from_dense(np.hstack([col, col]), updates_per_entry=1, seed=7)
    M = np.log1p(np.abs(A))
    cfg = RegressionConfig.build(d=2, sketch_rows=10, mode="exact")
    result = regress_solve(stream, M[:, 0] * 2.0, cfg)

    assert result.rank_deficient
    assert "rank_deficient" in result.flags
    assert np.allclose(result.x, [1.0, 1.0], atol=1e-8), "Minimum-norm solution splits the weight"

    print("  ✓ Rank deficiency flagged")


def test_normalize_scales_solution():
    """With normalize the solution refers to f(A) / ||S f(A)||_2."""
    print("Testing spectral normalization...")

    stream, _, M = _design(seed=8)
    x_true = np.array([1.0, 2.0, -1.0])
    cfg = RegressionConfig.build(d=3, sketch_rows=12, mode="exact", normalize=True, seed=2)
    result = regress_solve(stream, M @ x_true, cfg)

    assert result.norm_scale > 1.0
    assert np.allclose(result.x / result.norm_scale, x_true, atol=1e-8)

    print("  ✓ Normalized solution consistent")


def test_input_validation():
    """Width mismatch, n < d and bad b are refused."""
    print("Testing regression input validation...")

    stream, _, M = _design(n=10, d=3)
    with pytest.raises(ConfigError):
        regress_solve(stream, np.ones(10), RegressionConfig.build(d=4))
    with pytest.raises(DomainError):
        regress_solve(stream, np.ones(9), RegressionConfig.build(d=3))
    with pytest.raises(DomainError):
        regress_solve(stream, np.full(10, np.nan), RegressionConfig.build(d=3))

    wide, _ = stream_from_dense(np.ones((2, 3)), updates_per_entry=1)
    with pytest.raises(ConfigError):
        regress_solve(wide, np.ones(2), RegressionConfig.build(d=3))

    print("  ✓ Validation OK")


def run_all_tests():
    """Run all regression tests."""
    print("\n" + "=" * 60)
    print("Running Regression Tests")
    print("=" * 60 + "\n")

    tests = [
        test_sketch_rows_rule,
        test_consistent_system_exact_mode,
        lambda: test_consistent_system_sketch_mode("gaussian"),
        lambda: test_consistent_system_sketch_mode("countsketch"),
        test_noisy_system_near_optimum,
        test_rank_deficient_flag,
        test_normalize_scales_solution,
        test_input_validation,
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
