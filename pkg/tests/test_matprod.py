"""Tests for the matrix product sketch Z ~ f(A) B.

Covers:
1. Exact answers (first level keeps everything) in both layouts
2. Sign-matrix guard and engine selection
3. Failed cells are zero and flagged, not fatal
4. Row locality of updates
5. Row norms of f(A) and squared row sums from the shared sample
6. Space accounting
7. PolySum engine for f = |x|^p, bit-identical under reordering
"""

import sys
sys.path.insert(0, ".")

import numpy as np
import pytest

from app.errors import ConfigError, DomainError
from app.fsketch import AbsPower, Log1pPower
from app.matprod import (
    MatrixProductSketch,
    RowNormSketch,
    matprod_init,
    matprod_query,
    matprod_update,
    rownorm_query,
)

LOG = Log1pPower()


def _random_case(n_rows=12, n_cols=20, k=3, seed=0, density=0.5):
    rng = np.random.default_rng(seed)
    A = rng.integers(-6, 7, size=(n_rows, n_cols)).astype(float)
    A[rng.random(A.shape) > density] = 0.0
    B = rng.choice([-1.0, 0.0, 1.0], size=(n_cols, k))
    return A, B


def _feed(sketch, A):
    rows, cols = np.nonzero(A)
    # Each entry arrives as two updates in scrambled order.
    rows = np.concatenate([rows, rows])
    cols = np.concatenate([cols, cols])
    values = A[rows, cols]
    deltas = np.concatenate([values[: values.size // 2] - 1.0, np.ones(values.size // 2)])
    order = np.random.default_rng(1).permutation(rows.size)
    sketch.update_many(rows[order], cols[order], deltas[order])
    return sketch


def _exact_sketch(B, n_rows, layout, **kwargs):
    return MatrixProductSketch(
        B, LOG, 0.25, 0.01, n_rows=n_rows, layout=layout,
        gamma=1000.0, capacity=B.shape[0], seed=5, **kwargs,
    )


def test_exact_per_cell():
    """Per-cell layout reproduces f(A) B when no subsampling happens."""
    print("Testing exact per-cell product...")

    A, B = _random_case()
    sketch = _feed(_exact_sketch(B, A.shape[0], "per_cell"), A)
    estimate = matprod_query(sketch)

    assert estimate.failed_count == 0, "No cell should fail"
    assert np.allclose(estimate.values, LOG(A) @ B, rtol=1e-9, atol=1e-9), "Per-cell product wrong"

    print("  ✓ Per-cell product exact")


def test_exact_row_shared_real_weights():
    """Row-shared layout applies an arbitrary real B at query time."""
    print("Testing exact row-shared product...")

    A, _ = _random_case(seed=2)
    B = np.random.default_rng(3).normal(size=(A.shape[1], 7))
    sketch = _feed(_exact_sketch(B, A.shape[0], "row_shared"), A)
    estimate = sketch.query()

    assert np.allclose(estimate.values, LOG(A) @ B, rtol=1e-9, atol=1e-9), "Row-shared product wrong"
    dense = sketch.sample_matrix().toarray()
    assert np.allclose(dense, LOG(A)), "Sample matrix should equal f(A) at p = 1"

    print("  ✓ Row-shared product exact")


def test_rectangular_and_single_updates():
    """n_rows != n_cols, scalar updates through matprod_update."""
    print("Testing rectangular A with scalar updates...")

    A, B = _random_case(n_rows=4, n_cols=30, k=2, seed=4)
    sketch = matprod_init(B, LOG, 0.25, 0.01, n_rows=4, gamma=1000.0, capacity=30, seed=1)
    for i, j in zip(*np.nonzero(A)):
        matprod_update(sketch, int(i), int(j), float(A[i, j]))
    assert np.allclose(sketch.query().values, LOG(A) @ B, rtol=1e-9, atol=1e-9)
    assert sketch.updates_seen == int(np.count_nonzero(A))

    print("  ✓ Rectangular product exact")


def test_sign_guard_and_engines():
    """Non-sign B needs opt-in; engine defaults follow f and layout."""
    print("Testing sign guard and engine selection...")

    B = np.array([[0.5, 1.0], [1.0, -1.0]])
    with pytest.raises(DomainError):
        MatrixProductSketch(B, LOG)
    assert MatrixProductSketch(B, LOG, allow_real_weights=True).engine == "sampled"
    assert MatrixProductSketch(B, LOG, layout="row_shared").engine == "sampled"

    signs = np.sign(B)
    assert MatrixProductSketch(signs, AbsPower(p=1.0)).engine == "polysum"
    assert MatrixProductSketch(signs, AbsPower(p=1.0), layout="row_shared").engine == "sampled"
    with pytest.raises(ConfigError):
        MatrixProductSketch(signs, LOG, engine="polysum")
    with pytest.raises(ConfigError):
        MatrixProductSketch(signs, LOG, layout="diagonal")
    with pytest.raises(DomainError):
        MatrixProductSketch(np.ones(3), LOG)

    print("  ✓ Guards and engines OK")


def test_failed_cells_are_zero_and_flagged():
    """A cell whose every level fails is zeroed and flagged; the rest still answer."""
    print("Testing failed cells...")

    n = 16
    B = np.ones((n, 1))
    sketch = MatrixProductSketch(B, LOG, n_rows=2, gamma=2.0 ** 10, capacity=3, seed=0)
    sketch.update_many(np.zeros(n, dtype=int), np.arange(n), np.ones(n))  # row 0: support 16 > 3
    sketch.update(1, 5, 2.0)                                               # row 1: support 1

    estimate = sketch.query()
    assert estimate.failed[0, 0] and not estimate.failed[1, 0]
    assert estimate.values[0, 0] == 0.0, "Failed cell must be 0"
    assert np.isclose(estimate.values[1, 0], np.log(3.0))
    assert estimate.failed_count == 1

    print("  ✓ Failed cells zeroed")


def test_row_locality():
    """Updates to row i change only row i of the estimate."""
    print("Testing row locality...")

    A, B = _random_case(seed=6)
    sketch = _exact_sketch(B, A.shape[0], "per_cell")
    sketch.update_many(np.full(A.shape[1], 2), np.arange(A.shape[1]), A[2] + 1.0)
    values = sketch.query().values
    assert not np.delete(values, 2, axis=0).any(), "Rows other than 2 changed"

    print("  ✓ Updates stay in their row")


def test_row_norms():
    """RowNormSketch and squared_row_sums both estimate sum_j f(A_ij)^2."""
    print("Testing row norms...")

    A, _ = _random_case(seed=8)
    truth = (LOG(A) ** 2).sum(axis=1)

    norms = RowNormSketch(LOG, A.shape[1], n_rows=A.shape[0], gamma=1000.0, capacity=A.shape[1], seed=2)
    _feed(norms, A)
    assert np.allclose(rownorm_query(norms), truth, rtol=1e-9)
    assert norms.inner.transform == Log1pPower(power=2)

    shared = _feed(_exact_sketch(np.ones((A.shape[1], 1)), A.shape[0], "row_shared"), A)
    sums = shared.squared_row_sums()
    assert np.allclose(sums.values, truth, rtol=1e-9)

    with pytest.raises(ConfigError):
        _exact_sketch(np.ones((A.shape[1], 1)), A.shape[0], "per_cell").squared_row_sums()
    with pytest.raises(ConfigError):
        RowNormSketch(AbsPower(p=2.0), 5)

    print("  ✓ Row norms exact")


def test_space_report():
    """Allocated bytes are the K-Set bank plus hash seeds; nominal = streams * capacity * word."""
    print("Testing space report...")

    A, B = _random_case(seed=9)
    sketch = _feed(_exact_sketch(B, A.shape[0], "row_shared"), A)
    sketch.query()
    report = sketch.space_report()
    assert report.nominal_bytes == A.shape[0] * B.shape[0] * 8
    assert report.occupied_bytes == np.count_nonzero(A) * 8
    grid = sketch.grid
    assert report.allocated_bytes == grid.bank.nbytes + 8 * grid.levels * grid.hash_degree
    assert report.allocated_bytes >= grid.bank.cell_count * 3 * 8
    assert report.allocated_bytes > report.nominal_bytes
    total = report + report
    assert total.nominal_bytes == 2 * report.nominal_bytes

    print("  ✓ Space accounting consistent")


@pytest.mark.slow
def test_subsampled_per_cell_accuracy():
    """With a small K-Set budget the cells answer from sparse levels, near the truth."""
    print("Testing subsampled per-cell accuracy...")

    rng = np.random.default_rng(11)
    n_rows, n_cols = 4, 1024
    A = rng.integers(1, 50, size=(n_rows, n_cols)).astype(float)
    B = np.ones((n_cols, 2))
    B[::2, 1] = -1.0
    B[1::4, 1] = 0.0
    truth = LOG(A) @ B

    errors = []
    for seed in range(3):
        sketch = MatrixProductSketch(B, LOG, n_rows=n_rows, gamma=64.0, capacity=150, seed=seed)
        rows, cols = np.nonzero(A)
        sketch.update_many(rows, cols, A[rows, cols])
        estimate = sketch.query()
        assert estimate.failed_count == 0
        errors.append(np.abs(estimate.values[:, 0] - truth[:, 0]) / truth[:, 0])
    assert np.median(errors) < 0.25, f"Median relative error {np.median(errors):.3f}"

    print(f"  ✓ Median relative error {np.median(errors):.3f}")


@pytest.mark.slow
def test_polysum_engine():
    """f = |x| with a sign B routes through PolySum cells."""
    print("Testing PolySum engine...")

    rng = np.random.default_rng(12)
    A = rng.integers(1, 10, size=(3, 32)).astype(float)
    B = np.ones((32, 1))
    truth = np.abs(A).sum(axis=1)
    estimates = []
    for seed in range(5):
        sketch = MatrixProductSketch(B, AbsPower(p=1.0), n_rows=3, width=8192, seed=seed)
        rows, cols = np.nonzero(A)
        sketch.update_many(rows, cols, A[rows, cols])
        estimates.append(sketch.query().values[:, 0])
    err = np.abs(np.median(estimates, axis=0) - truth) / truth
    assert err.max() < 0.4, f"PolySum cell errors {err}"

    print("  ✓ PolySum cells near truth")


def test_polysum_engine_order_invariance():
    """PolySum cells give bit-identical queries for any order and chunking."""
    print("Testing PolySum engine order invariance...")

    rng = np.random.default_rng(21)
    B = rng.choice([-1.0, 0.0, 1.0], size=(16, 3))
    rows = rng.integers(0, 4, size=300)
    cols = rng.integers(0, 16, size=300)
    deltas = rng.normal(size=300)

    reference = MatrixProductSketch(B, AbsPower(p=0.5), n_rows=4, epsilon=0.5, seed=6)
    reference.update_many(rows, cols, deltas)
    expected = reference.query().values
    for trial in range(4):
        sketch = MatrixProductSketch(B, AbsPower(p=0.5), n_rows=4, epsilon=0.5, seed=6)
        order = rng.permutation(300)
        chunk = int(rng.integers(1, 50))
        for lo in range(0, 300, chunk):
            part = order[lo:lo + chunk]
            sketch.update_many(rows[part], cols[part], deltas[part])
        assert np.array_equal(sketch.query().values, expected), f"Trial {trial}: query depends on order"

    print("  ✓ Identical answers for every order")


def run_all_tests():
    """Run all matrix product tests."""
    print("\n" + "=" * 60)
    print("Running Matrix Product Sketch Tests")
    print("=" * 60 + "\n")

    tests = [
        test_exact_per_cell,
        test_exact_row_shared_real_weights,
        test_rectangular_and_single_updates,
        test_sign_guard_and_engines,
        test_failed_cells_are_zero_and_flagged,
        test_row_locality,
        test_row_norms,
        test_space_report,
        test_subsampled_per_cell_accuracy,
        test_polysum_engine,
        test_polysum_engine_order_invariance,
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
