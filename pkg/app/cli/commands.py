"""
Subcommands of the fsketch CLI.

Usage:
    python -m app.main generate logdata --n 200 --seed 7 --out data/logdata_n200_s7.fss
    python -m app.main lowrank data/logdata_n200_s7.fss --k 10 --budget 10% --seeds 0,1,2,3,4 --out results/lowrank.csv
    python -m app.main baseline-uniform data/logdata_n200_s7.fss --k 10 --num-cols 20
    python -m app.main sweep data/logdata_n200_s7.fss --k 10 --budgets 10% --gammas 25,50,100 --out results/sweep.csv
    python -m app.main regress data/design.fss --b data/b.npy --epsilon 0.25 --out results/regress.json
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.cli.csv_output import format_records, write_records
from app.cli.harness import (
    check_oracle_size,
    dense_oracle,
    error_ratio,
    load_column_weights,
    load_stream,
    mean_record,
    optimal_residual,
    parse_budget,
    run_jobs,
    run_lowrank_eval,
    uniform_baseline,
)
from app.cli.models import EvalRecord
from app.config import get_settings
from app.errors import ConfigError
from app.fsketch.transforms import parse_transform
from app.lowrank.models import AdaptiveVariant, PipelineMode, ProjectionEstimator
from app.regress import RegressionConfig, regress_solve
from app.streams import (
    ValueEncoding,
    gen_logdata,
    gen_lowrank_fixture,
    gen_sqdata,
    ingest_cooccurrence,
    read_tokens,
    stream_from_dense,
    write_stream_file,
    write_text_stream,
)
from app.utils.file_utils import atomic_write_bytes

logger = logging.getLogger(__name__)

GENERATE_KINDS = ("logdata", "sqdata", "cooc", "fixture")


def parse_list(text: str, cast=int) -> list:
    """Comma-separated values; an empty list is a config error."""
    items = [item.strip() for item in (text or "").split(",") if item.strip()]
    if not items:
        raise ConfigError(f"expected a comma-separated list, got '{text}'")
    try:
        return [cast(item) for item in items]
    except ValueError:
        raise ConfigError(f"bad list value in '{text}'") from None


def _seeds(args) -> List[int]:
    if args.seeds:
        return parse_list(args.seeds)
    return [args.seed if args.seed is not None else get_settings().seed]


def _write_stream(stream, out: str, encoding: str) -> None:
    if Path(out).suffix in (".txt", ".tsv"):
        write_text_stream(stream, out)
    else:
        write_stream_file(stream, out, encoding=ValueEncoding[encoding.upper()], scale=get_settings().fixed_point_scale)


def _check_exact_eval(args) -> None:
    """Refuse up front when the dense oracle could not evaluate this stream.

    Raises:
        ConfigError: If exact evaluation is on and the stream exceeds FSKETCH_ORACLE_MAX_N
    """
    if not args.no_exact_eval:
        check_oracle_size(load_stream(args.stream), get_settings())


def _emit(records: List[EvalRecord], out: Optional[str]) -> None:
    if out:
        write_records(out, records)
    print(format_records(records), end="")


# =============================================================================
# Commands
# =============================================================================

def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else get_settings().seed
    scale = get_settings().fixed_point_scale
    if args.kind in ("logdata", "sqdata", "fixture") and args.n < 2:
        raise ConfigError(f"--n must be >= 2, got {args.n}")

    if args.kind == "logdata":
        stream = gen_logdata(args.n, seed, variant=args.variant, scale=scale).stream
    elif args.kind == "sqdata":
        stream = gen_sqdata(args.n, seed, scale=scale).stream
    elif args.kind == "fixture":
        A = gen_lowrank_fixture(args.n, args.rank, seed=seed, kind=args.fixture_kind)
        stream, _ = stream_from_dense(A, updates_per_entry=1, seed=seed, scale=scale)
    else:
        if not args.text:
            raise ConfigError("generate cooc needs --text")
        data = ingest_cooccurrence(
            read_tokens(args.text),
            vocab_n=args.vocab,
            window=args.window,
            weighting=args.weighting,
            pmi_prescale=args.pmi_prescale,
        )
        stream = data.stream
        sidecar = {
            "vocabulary": sorted(data.vocabulary, key=data.vocabulary.get),
            "unigram_counts": data.unigram_counts.tolist(),
            "total_tokens": data.total_tokens,
            "pmi_prescaled": data.pmi_prescaled,
        }
        atomic_write_bytes(f"{args.out}.unigrams.json", json.dumps(sidecar, indent=2).encode("utf-8"))

    _write_stream(stream, args.out, args.encoding)
    print(f"{args.kind}: {len(stream)} updates, {stream.n_rows}x{stream.n_cols} -> {args.out}")
    return 0


def cmd_lowrank(args) -> int:
    _check_exact_eval(args)
    seeds = _seeds(args)
    record_timing = get_settings().record_timing and not args.no_timing
    params = [
        dict(
            stream_path=args.stream,
            dataset=args.dataset or Path(args.stream).stem,
            k=args.k,
            f_spec=args.f,
            seed=seed,
            budget=args.budget,
            sample_size=args.sample_size,
            variant=args.variant,
            estimator=args.estimator,
            mode=args.mode,
            exact_eval=not args.no_exact_eval,
            with_baseline=not args.no_baseline,
            weights_path=args.pmi_weights,
            record_timing=record_timing,
        )
        for seed in seeds
    ]
    records = run_jobs(run_lowrank_eval, params, jobs=args.jobs)
    if len(records) > 1:
        records.append(mean_record(records))
    _emit(records, args.out)
    return 0


def cmd_baseline_uniform(args) -> int:
    settings = get_settings()
    seed = args.seed if args.seed is not None else settings.seed
    stream = load_stream(args.stream)
    check_oracle_size(stream, settings)
    transform = parse_transform(args.f)
    weights = load_column_weights(args.pmi_weights)

    started = time.perf_counter()
    L = uniform_baseline(stream, transform, args.k, args.num_cols, seed=seed, column_weights=weights, settings=settings)
    wall_ms = (time.perf_counter() - started) * 1000.0
    if args.no_timing or not settings.record_timing:
        wall_ms = 0.0
    M = dense_oracle(stream, transform, weights, settings)
    record = EvalRecord(
        dataset=args.dataset or Path(args.stream).stem,
        n=stream.n_rows,
        k=args.k,
        budget=str(args.num_cols),
        variant="uniform",
        seed=seed,
        space_ratio=args.num_cols / stream.n_cols,
        error_ratio=error_ratio(M, L, args.k, optimal_residual(M, args.k)),
        wall_ms=wall_ms,
    )
    _emit([record], args.out)
    return 0


def cmd_sweep(args) -> int:
    _check_exact_eval(args)
    budgets = parse_list(args.budgets, str)
    gammas = parse_list(args.gammas, int)
    seeds = _seeds(args)
    record_timing = get_settings().record_timing and not args.no_timing
    params = [
        dict(
            stream_path=args.stream,
            dataset=args.dataset or Path(args.stream).stem,
            k=args.k,
            f_spec=args.f,
            seed=seed,
            budget=budget,
            sample_size=gamma,
            variant=args.variant,
            estimator=args.estimator,
            mode=args.mode,
            exact_eval=not args.no_exact_eval,
            with_baseline=not args.no_baseline,
            weights_path=args.pmi_weights,
            record_timing=record_timing,
        )
        for budget in budgets
        for gamma in gammas
        for seed in seeds
    ]
    records = run_jobs(run_lowrank_eval, params, jobs=args.jobs)
    if len(seeds) > 1:
        grouped = [records[i:i + len(seeds)] for i in range(0, len(records), len(seeds))]
        records = [row for group in grouped for row in group + [mean_record(group)]]
    _emit(records, args.out)
    return 0


def _load_vector(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, dtype=np.float64, ndmin=1)


def cmd_regress(args) -> int:
    settings = get_settings()
    stream = load_stream(args.stream)
    b = _load_vector(args.b)
    cfg = RegressionConfig.build(
        d=args.d or stream.n_cols,
        epsilon=args.epsilon,
        sketch_rows=args.sketch_rows,
        transform_kind=args.transform_kind,
        transform=args.f,
        budget=parse_budget(args.budget, stream.n_rows),
        normalize=args.normalize,
        mode=args.mode,
        seed=args.seed if args.seed is not None else settings.seed,
    )
    result = regress_solve(stream, b, cfg, settings)
    report = {
        "n": stream.n_rows,
        "d": cfg.d,
        "sketch_rows": result.sketch_rows,
        "x": result.x.tolist(),
        "rank_deficient": result.rank_deficient,
        "norm_scale": result.norm_scale,
        "sketched_residual": result.sketched_residual,
        "space_bytes": result.space.allocated_bytes,
        "flags": result.flags,
    }
    if not args.no_exact_eval:
        A = dense_oracle(stream, parse_transform(cfg.transform), settings=settings) / result.norm_scale
        optimum = float(np.linalg.norm(A @ np.linalg.lstsq(A, b, rcond=None)[0] - b))
        residual = float(np.linalg.norm(A @ result.x - b))
        report.update({"residual": residual, "optimal_residual": optimum, "b_norm": float(np.linalg.norm(b))})
    text = json.dumps(report, indent=2)
    if args.out:
        atomic_write_bytes(args.out, (text + "\n").encode("utf-8"))
    print(text)
    return 0


# =============================================================================
# Parser
# =============================================================================

def _common_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("stream", help="Stream file (binary, or .txt 'i j delta')")
    parser.add_argument("--k", type=int, required=True, help="Target rank")
    parser.add_argument("--f", default="log1p", help="Entrywise f: log1p, log1p:c or pow:p")
    parser.add_argument("--seed", type=int, default=None, help="Seed (default FSKETCH_SEED)")
    parser.add_argument("--seeds", default=None, help="Comma-separated seeds; adds a mean row")
    parser.add_argument("--dataset", default=None, help="Dataset label for the CSV (default: file stem)")
    parser.add_argument("--out", default=None, help="CSV file to append rows to")
    parser.add_argument("--no-timing", action="store_true", help="Write wall_ms=0")
    parser.add_argument("--pmi-weights", default=None, help="Unigram sidecar JSON; applies p_j column weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsketch", description="Sketches of entrywise-transformed streamed matrices")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Write a synthetic or text-derived stream file")
    gen.add_argument("kind", choices=GENERATE_KINDS)
    gen.add_argument("--n", type=int, default=100, help="Matrix size")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--encoding", choices=("fixed", "sign"), default="fixed")
    gen.add_argument("--variant", choices=("expm1", "exp"), default="expm1", help="LOGDATA entry map")
    gen.add_argument("--rank", type=int, default=10, help="Fixture rank")
    gen.add_argument("--fixture-kind", choices=("pow1", "log1p"), default="pow1")
    gen.add_argument("--text", default=None, help="UTF-8 text, one sentence per line (cooc)")
    gen.add_argument("--vocab", type=int, default=1000)
    gen.add_argument("--window", type=int, default=10)
    gen.add_argument("--weighting", choices=("unit", "inverse_distance"), default="inverse_distance")
    gen.add_argument("--pmi-prescale", action="store_true")
    gen.set_defaults(handler=cmd_generate)

    low = sub.add_parser("lowrank", help="Run the low-rank pipeline and evaluate it")
    _common_eval_flags(low)
    low.add_argument("--budget", default=None, help="K-Set capacity per column, or a share like 10%%")
    low.add_argument("--sample-size", type=int, default=None, help="Set s = d1 = d2")
    low.add_argument("--variant", choices=[v.value for v in AdaptiveVariant], default="experimental_qi")
    low.add_argument("--estimator", choices=[e.value for e in ProjectionEstimator], default="scaled")
    low.add_argument("--mode", choices=[m.value for m in PipelineMode], default="sketch")
    low.add_argument("--no-exact-eval", action="store_true", help="Skip the dense oracle")
    low.add_argument("--no-baseline", action="store_true", help="Skip the matched-space uniform baseline")
    low.add_argument("--jobs", type=int, default=1, help="Worker processes for seeds")
    low.set_defaults(handler=cmd_lowrank)

    base = sub.add_parser("baseline-uniform", help="Uniform column sampling baseline")
    _common_eval_flags(base)
    base.add_argument("--num-cols", type=int, required=True)
    base.set_defaults(handler=cmd_baseline_uniform)

    sweep = sub.add_parser("sweep", help="Cross product of budgets and sample sizes")
    _common_eval_flags(sweep)
    sweep.add_argument("--budgets", required=True, help="Comma-separated budgets")
    sweep.add_argument("--gammas", required=True, help="Comma-separated sample sizes (s = d1 = d2)")
    sweep.add_argument("--variant", choices=[v.value for v in AdaptiveVariant], default="experimental_qi")
    sweep.add_argument("--estimator", choices=[e.value for e in ProjectionEstimator], default="scaled")
    sweep.add_argument("--mode", choices=[m.value for m in PipelineMode], default="sketch")
    sweep.add_argument("--no-exact-eval", action="store_true")
    sweep.add_argument("--no-baseline", action="store_true")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(handler=cmd_sweep)

    reg = sub.add_parser("regress", help="Sketch-and-solve regression")
    reg.add_argument("stream", help="Stream of the n x d design")
    reg.add_argument("--b", required=True, help="Target vector (.npy or text)")
    reg.add_argument("--d", type=int, default=None, help="Feature count (default: stream width)")
    reg.add_argument("--epsilon", type=float, default=0.25)
    reg.add_argument("--sketch-rows", type=int, default=None)
    reg.add_argument("--transform-kind", choices=("gaussian", "countsketch"), default="gaussian")
    reg.add_argument("--f", default="log1p")
    reg.add_argument("--budget", default=None)
    reg.add_argument("--normalize", action="store_true", help="Divide the design by its spectral norm")
    reg.add_argument("--mode", choices=[m.value for m in PipelineMode], default="sketch")
    reg.add_argument("--seed", type=int, default=None)
    reg.add_argument("--no-exact-eval", action="store_true")
    reg.add_argument("--out", default=None, help="JSON report path")
    reg.set_defaults(handler=cmd_regress)
    return parser
