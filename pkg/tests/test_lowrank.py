"""Tests for the multi-pass low-rank pipeline.

Covers:
1. Config defaults, overrides and validation
2. Exact mode recovers exact low-rank f(A) in one pass
3. Sketch mode with lossless sketches: five passes, tiny residual
4. Variants: thresholded eta, regression estimator, separate row-norm sketch
5. Column weights, zero matrices, failure handling
"""

import sys
sys.path.insert(0, ".")

import numpy as np
import pytest

from app.errors import ConfigError, PipelineError
from app.fsketch import AbsPower, Log1pPower
from app.lowrank import (
    LowRankConfig,
    LowRankPipeline,
    extract_columns,
    lowrank_run,
    stage1_leverage,
    stage2_adaptive,
    stage3_solve,
)
from app.streams import MemoryStream, OneShotStream, accumulate_dense, gen_lowrank_fixture, stream_from_dense

SKETCH_STAGES = ["leverage", "extract_p", "adaptive", "extract_y", "solve"]


def _residual(M, L):
    return float(np.linalg.norm(M - L @ (L.T @ M)))


def _pow1_case(n=30, rank=3, seed=0):
    A = gen_lowrank_fixture(n, rank, seed=seed, kind="pow1")
    stream, A = stream_from_dense(A, updates_per_entry=1, seed=seed)
    return stream, A


def _lossless(n, **overrides):
    """Config whose sketches keep every coordinate at level 0."""
    params = dict(k=3, sample_size=8, budget=n, gamma=1e4, seed=1)
    params.update(overrides)
    return LowRankConfig.build(**params)


# =============================================================================
# Config
# =============================================================================

def test_config_sizes():
    """s, d1, d2 and eta follow their formulas; sample_size overrides all three."""
    print("Testing low-rank config sizes...")

    cfg = LowRankConfig.build(k=8)
    assert (cfg.s, cfg.d1, cfg.d2) == (24, 72, 32)
    assert np.isclose(cfg.eta, 0.25 * np.sqrt(72) + 0.0625 * 72)

    one = LowRankConfig.build(k=1)
    assert (one.s, one.d1, one.d2) == (1, 1, 4)

    fixed = LowRankConfig.build(k=8, sample_size=5)
    assert fixed.s == fixed.d1 == fixed.d2 == 8, "sample_size never drops below k"

    assert LowRankConfig.build(k=2, transform_kind="fjlt").transform_kind == "srht"
    for bad in (dict(k=0), dict(k=2, epsilon=1.5), dict(k=2, transform_kind="gaussian"), dict(k=2, budget=0)):
        with pytest.raises(ConfigError):
            LowRankConfig.build(**bad)

    print("  ✓ Config sizes OK")


def test_pipeline_guards():
    """One-shot streams, oversized k and bad weights are refused."""
    print("Testing pipeline guards...")

    stream, _ = _pow1_case(n=10)
    with pytest.raises(ConfigError):
        LowRankPipeline(OneShotStream(stream), LowRankConfig.build(k=2), AbsPower())
    with pytest.raises(ConfigError):
        LowRankPipeline(stream, LowRankConfig.build(k=11), AbsPower())
    with pytest.raises(ConfigError):
        LowRankPipeline(stream, LowRankConfig.build(k=2), AbsPower(), column_weights=np.ones(9))
    with pytest.raises(ConfigError):
        LowRankPipeline(stream, LowRankConfig.build(k=2), AbsPower(), column_weights=-np.ones(10))

    print("  ✓ Guards OK")


def test_extract_columns_exact():
    """Column extraction returns f of the exact accumulated columns."""
    print("Testing column extraction...")

    rng = np.random.default_rng(2)
    A = rng.normal(size=(8, 6))
    stream, A = stream_from_dense(A, updates_per_entry=3, seed=2)
    cols = np.array([4, 1])
    got = extract_columns(stream, cols, Log1pPower(), 2 ** 20)
    assert np.allclose(got, np.log1p(np.abs(A[:, cols])), rtol=1e-12, atol=1e-12)
    assert stream.passes == 1

    print("  ✓ Columns extracted exactly")


# =============================================================================
# Exact mode
# =============================================================================

def test_exact_mode_recovers_low_rank():
    """f = |x| on an integer rank-3 matrix: one pass, zero residual."""
    print("Testing exact mode...")

    stream, A = _pow1_case()
    result = lowrank_run(stream, LowRankConfig.build(k=3, sample_size=8, mode="exact", seed=4), AbsPower())
    M = np.abs(A)

    assert result.pass_count == 1
    assert result.L.shape == (30, 3)
    assert np.allclose(result.L.T @ result.L, np.eye(3))
    assert _residual(M, result.L) <= 1e-8 * np.linalg.norm(M)
    assert np.isclose(result.residual_fro, _residual(M, result.L), atol=1e-8)
    assert [s.stage for s in result.stages] == ["dense"] + SKETCH_STAGES

    print("  ✓ Exact mode residual ~ 0")


def test_column_weights():
    """With weights w the pipeline approximates f(A) diag(w)."""
    print("Testing column weights...")

    stream, A = _pow1_case(n=20, seed=3)
    w = np.random.default_rng(3).uniform(0.5, 3.0, size=20)
    result = lowrank_run(stream, LowRankConfig.build(k=3, sample_size=8, mode="exact", seed=1), AbsPower(), column_weights=w)
    M = np.abs(A) * w
    assert _residual(M, result.L) <= 1e-8 * np.linalg.norm(M)

    print("  ✓ Weighted matrix recovered")


def test_stages_one_by_one():
    """The stage operations can be driven separately; P is kept inside Y."""
    print("Testing stage-by-stage run...")

    stream, _ = _pow1_case(n=20, seed=8)
    pipeline = LowRankPipeline(stream, _lossless(20, k=2, sample_size=4), AbsPower())
    P = stage1_leverage(pipeline)
    assert stream.passes == 2, "Leverage sketch plus extraction"
    Y = stage2_adaptive(pipeline)
    assert np.isin(P, Y).all()
    assert stream.passes == 4
    L = stage3_solve(pipeline)
    assert stream.passes == 5
    assert L.shape == (20, 2)
    assert np.allclose(L.T @ L, np.eye(2))
    assert [s.stage for s in pipeline.stages] == SKETCH_STAGES

    print("  ✓ Stages OK")


# =============================================================================
# Sketch mode
# =============================================================================

def test_sketch_mode_lossless():
    """Lossless sketches: five passes, residual at rounding level, stage report complete."""
    print("Testing sketch mode...")

    A = gen_lowrank_fixture(30, 2, seed=5, kind="log1p")
    stream, A = stream_from_dense(A, updates_per_entry=1, seed=5)
    M = np.log1p(np.abs(A))

    result = lowrank_run(stream, _lossless(30, k=2), Log1pPower())
    assert result.pass_count == 5, f"Expected 5 passes, got {result.pass_count}"
    assert [s.stage for s in result.stages] == SKETCH_STAGES
    assert _residual(M, result.L) <= 1e-4 * np.linalg.norm(M)
    assert result.residual_fro <= 1e-3 * np.linalg.norm(M)
    assert result.peak_space_bytes > 0
    assert set(result.space_report) == set(SKETCH_STAGES)
    assert all(not mask.any() for mask in result.masks.values()), "No column should fail"
    assert result.sampled_columns is not None and result.sampled_columns.size >= 2

    print("  ✓ Sketch mode residual ~ 0 in five passes")


@pytest.mark.parametrize(
    "overrides",
    [
        dict(adaptive_variant="thresholded_eta"),
        dict(projection_estimator="regression"),
        dict(share_row_norm_sample=False),
        dict(transform_kind="fjlt"),
    ],
)
def test_sketch_mode_variants(overrides):
    """Every variant still recovers an exactly low-rank |A| in five passes."""
    print(f"Testing sketch variant {overrides}...")

    stream, A = _pow1_case(n=24, seed=6)
    M = np.abs(A)
    result = lowrank_run(stream, _lossless(24, **overrides), AbsPower(p=1.0))
    assert result.pass_count == 5
    assert _residual(M, result.L) <= 1e-6 * np.linalg.norm(M), f"{overrides}: residual too large"

    print("  ✓ Variant OK")


def test_zero_matrix_falls_back():
    """A stream that cancels to zero sets the fallback flags and still returns k columns."""
    print("Testing zero matrix...")

    stream = MemoryStream([0, 0, 3, 3], [1, 1, 2, 2], [2.0, -2.0, 1.0, -1.0], 6, 6)
    assert not accumulate_dense(stream).any()

    for mode in ("exact", "sketch"):
        result = lowrank_run(stream, _lossless(6, k=2, sample_size=3, mode=mode), Log1pPower())
        assert "leverage_uniform_fallback" in result.flags
        assert "adaptive_uniform_fallback" in result.flags
        assert "rank_padding" in result.flags
        assert result.L.shape == (6, 2)
        assert np.allclose(result.L.T @ result.L, np.eye(2))
        assert result.residual_fro == 0.0

    print("  ✓ Fallbacks flagged")


def test_every_column_failing_raises():
    """A K-Set budget far below every column's support aborts with PipelineError."""
    print("Testing all-columns-fail...")

    stream, _ = stream_from_dense(np.ones((12, 12)) * 3.0, updates_per_entry=1)
    cfg = LowRankConfig.build(k=2, sample_size=4, budget=1, gamma=1e6)
    with pytest.raises(PipelineError) as info:
        lowrank_run(stream, cfg, Log1pPower())
    assert info.value.stage == "leverage"

    print("  ✓ PipelineError raised")


@pytest.mark.slow
def test_sketch_mode_with_subsampling():
    """Small budgets force subsampled levels; the rank-k error stays moderate."""
    print("Testing sketch mode with subsampling...")

    rng = np.random.default_rng(7)
    U = rng.random((120, 3))
    V = rng.random((120, 3))
    A = np.expm1(U @ V.T) + 0.01 * rng.random((120, 120))
    stream, A = stream_from_dense(A, updates_per_entry=2, seed=7)
    M = np.log1p(np.abs(A))
    cfg = LowRankConfig.build(k=3, sample_size=12, budget=80, gamma=32.0, seed=2)
    result = lowrank_run(stream, cfg, Log1pPower())
    assert result.pass_count == 5
    relative = _residual(M, result.L) / np.linalg.norm(M)
    assert relative <= 0.1, f"Relative residual {relative:.3f}"

    print(f"  ✓ Relative residual {relative:.4f}")


def run_all_tests():
    """Run all low-rank tests."""
    print("\n" + "=" * 60)
    print("Running Low-Rank Pipeline Tests")
    print("=" * 60 + "\n")

    tests = [
        test_config_sizes,
        test_pipeline_guards,
        test_extract_columns_exact,
        test_exact_mode_recovers_low_rank,
        test_column_weights,
        test_stages_one_by_one,
        test_sketch_mode_lossless,
        lambda: test_sketch_mode_variants(dict(adaptive_variant="thresholded_eta")),
        lambda: test_sketch_mode_variants(dict(projection_estimator="regression")),
        lambda: test_sketch_mode_variants(dict(share_row_norm_sample=False)),
        lambda: test_sketch_mode_variants(dict(transform_kind="fjlt")),
        test_zero_matrix_falls_back,
        test_every_column_failing_raises,
        test_sketch_mode_with_subsampling,
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
