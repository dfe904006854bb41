"""
DP-ERM Bench Command-Line Interface.

This module provides a CLI for running differentially private ERM
benchmarks, querying the privacy accountant, tracing curvature along a
training path and checking the excess-risk rate on a synthetic task.

Usage:
    Benchmark:
        python main.py run --config adult.json

    Accountant:
        python main.py account --z 1.1 --q 0.1 --steps 800 --delta 1e-5
        python main.py account --epsilon 0.1 --delta 1e-5 --q 1 --steps 200

    Curvature trace:
        python main.py curvature --dataset adult.libsvm --lambda-list 0 1e-4 1e-3

    Rate check:
        python main.py scale --family epsilon --points 0.1 0.2 0.4 0.8 1.6

Exit codes:
    0 when every requested row or value was produced, 1 otherwise
    (infeasible budget, failed cells, ledger violations, invalid input).
"""

import argparse
import asyncio
import logging
import sys
import time
from pathlib import Path

from curvature.path_curvature import path_nu
from harness import (
    apply_env_overrides,
    emit_plot_data,
    load_config,
    run_curvature,
    run_experiment_async,
    scaling_study_async,
    write_manifest,
)
from models.exceptions import DpBenchError
from models.models import CurvatureConfig, DataFormat, MechanismSpec, PrivacyBudget, ScalingConfig, ScalingFamily
from privacy.rdp_accountant import calibrate_noise, epsilon_for


LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

logger = logging.getLogger("dp-bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Differentially private ERM benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
        Examples:
        python main.py run --config adult.json
        python main.py account --z 1.1 --q 0.1 --steps 800 --delta 1e-5
        python main.py curvature --dataset adult.libsvm --lambda-list 0 1e-4 1e-3
        python main.py scale --family epsilon --points 0.1 0.2 0.4 0.8 1.6
        """
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a benchmark from a JSON config")
    run.add_argument("--config", required=True, help="Path to an ExperimentConfig JSON file")

    account = commands.add_parser("account", help="Epsilon of a mechanism, or z for a budget")
    target = account.add_mutually_exclusive_group(required=True)
    target.add_argument("--z", type=float, help="Noise multiplier (prints epsilon)")
    target.add_argument("--epsilon", type=float, help="Target epsilon (prints calibrated z)")
    account.add_argument("--delta", type=float, required=True)
    account.add_argument("--q", type=float, default=1.0, help="Sampling ratio")
    account.add_argument("--steps", type=int, default=1)

    curvature = commands.add_parser("curvature", help="Curvature trace along a DP-GD path")
    curvature.add_argument("--dataset", required=True, help="Dataset path")
    curvature.add_argument("--format", choices=[f.value for f in DataFormat], default=DataFormat.LIBSVM.value)
    curvature.add_argument("--csv-header", action="store_true")
    curvature.add_argument("--name", help="Dataset id used in file names")
    curvature.add_argument("--lambda-list", type=float, nargs="+", default=[0.0, 1e-4, 1e-3])
    curvature.add_argument("--train-lambda", type=float, default=1e-4)
    curvature.add_argument("--steps", type=int, default=200)
    curvature.add_argument("--learning-rate", type=float, default=1.0)
    curvature.add_argument("--epsilon", type=float, default=0.1, help="Privacy of the traced path (0 = no noise)")
    curvature.add_argument("--stride", type=int, default=5)
    curvature.add_argument("--nu-sigma", type=float, help="Attach nu_hat with this perturbation std")
    curvature.add_argument("--retrain", action="store_true", help="Train one path per lambda")
    curvature.add_argument("--normalize-rows", action="store_true")
    curvature.add_argument("--seed", type=int, default=0)
    curvature.add_argument("--output-dir", default="results")

    scale = commands.add_parser("scale", help="Excess-risk rate on the synthetic task")
    scale.add_argument("--family", choices=[f.value for f in ScalingFamily], required=True)
    scale.add_argument("--points", type=float, nargs="+", required=True)
    scale.add_argument("--n", type=int, default=ScalingConfig.model_fields["n"].default)
    scale.add_argument("--p", type=int, default=ScalingConfig.model_fields["p"].default)
    scale.add_argument("--lam", type=float, default=ScalingConfig.model_fields["lam"].default)
    scale.add_argument("--epsilon", type=float, default=1.0)
    scale.add_argument("--repeats", type=int, default=50)
    scale.add_argument("--seed", type=int, default=0)
    scale.add_argument("--force-zero-noise", action="store_true")
    scale.add_argument("--workers", type=int, default=4)
    scale.add_argument("--output-dir", default="results")
    return parser


async def command_run(args) -> int:
    cfg = load_config(args.config)
    report = await run_experiment_async(cfg)
    for row in report.rows:
        if row.feasible:
            logger.info("%s %s eps=%g: %.2f%% +- %.2f (T=%s, lr=%s)", row.dataset, row.algorithm.value,
                        row.epsilon, row.mean_accuracy, row.std_accuracy, row.steps, row.learning_rate)
        else:
            logger.warning("%s %s eps=%g: infeasible", row.dataset, row.algorithm.value, row.epsilon)
    if report.violations:
        logger.error("%d ledger violations", len(report.violations))
    if report.missing:
        logger.error("Missing rows: %s", ", ".join(report.missing))
    return 0 if report.complete else 1


def command_account(args) -> int:
    if args.z is not None:
        mechanism = MechanismSpec(noise_multiplier=args.z, sampling_ratio=args.q, steps=args.steps)
        print(f"{epsilon_for(mechanism, args.delta):.6g}")
    else:
        budget = PrivacyBudget(epsilon=args.epsilon, delta=args.delta)
        print(f"{calibrate_noise(budget, args.q, args.steps):.6g}")
    return 0


def command_curvature(args) -> int:
    cfg = apply_env_overrides(CurvatureConfig(
        dataset_path=Path(args.dataset),
        dataset_format=args.format,
        dataset_name=args.name,
        csv_header=args.csv_header,
        normalize_rows=args.normalize_rows,
        train_lam=args.train_lambda,
        lambdas=args.lambda_list,
        steps=args.steps,
        learning_rate=args.learning_rate,
        epsilon=args.epsilon or None,
        stride=args.stride,
        nu_sigma=args.nu_sigma,
        retrain=args.retrain,
        seed=args.seed,
        output_dir=Path(args.output_dir),
    ))
    traces = run_curvature(cfg)
    for trace in traces:
        last = trace.samples[-1]
        logger.info("lambda=%g: %d samples, final avg=%.4g min=%.4g", trace.lam, len(trace.samples),
                    last.avg_curvature, last.min_curvature)
        if last.nu_hat is not None:
            logger.info("lambda=%g: path nu >= %.4g", trace.lam, path_nu(trace))
    return 0


async def command_scale(args) -> int:
    base = apply_env_overrides(ScalingConfig(
        n=args.n, p=args.p, lam=args.lam, epsilon=args.epsilon, repeats=args.repeats, seed=args.seed,
        force_zero_noise=args.force_zero_noise, workers=args.workers, output_dir=Path(args.output_dir),
    ))
    result = await scaling_study_async(args.family, args.points, base)
    base.output_dir.mkdir(parents=True, exist_ok=True)
    path = emit_plot_data(result, base.output_dir / f"scaling_{result.family.value}.csv")
    write_manifest(base.output_dir, [path], base.config_hash(), run_name=f"scaling_{result.family.value}",
                   extra={"slope": result.slope, "slope_se": result.slope_se})
    print(f"{result.slope:.6g}")
    print(f"{result.slope_se:.6g}")
    return 0


async def main() -> int:
    """
    Main entry point for the DP-ERM bench CLI.

    Parses the command line and routes to run / account / curvature / scale.

    Returns:
        Process exit code.
    """
    start = time.perf_counter()
    args = build_parser().parse_args()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)

    try:
        if args.command == "run":
            code = await command_run(args)
        elif args.command == "account":
            code = command_account(args)
        elif args.command == "curvature":
            code = command_curvature(args)
        else:
            code = await command_scale(args)
    except (DpBenchError, ValueError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        code = 1

    logger.info("%s completed in %.2f seconds", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
