"""
DP-ERM Benchmark Harness.

This module orchestrates benchmark runs: it loads and splits a dataset,
calibrates noise once per (algorithm, epsilon, T), runs every
(grid point, repeat) cell concurrently, selects the grid point with the best
mean validation accuracy and writes the result tables, per-run traces and a
provenance manifest. It also hosts the excess-risk metric, the synthetic
rate-check study and the curvature-trace run.

Functions:
    - load_config: ExperimentConfig from JSON plus environment overrides
    - prepare_data: Load, optionally normalise and split a dataset
    - run_seed: Deterministic per-run seed from the master seed
    - excess_risk: F(params) - F(x_*) on the training split
    - run_cells: Bounded concurrent execution of independent cells
    - run_experiment: Full benchmark run (sync wrapper of run_experiment_async)
    - synthetic_logistic_task: Generator of the rate-check task
    - scaling_study: Fitted log-log slope of excess risk against epsilon or n
    - run_curvature: Curvature trace of one training path
    - emit_table, emit_plot_data, write_manifest: CSV and manifest emission
"""

import asyncio
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import sparse
from scipy.special import expit
from scipy.stats import linregress

from curvature.path_curvature import average_curvature, curvature_trace, path_nu, retrained_curvature_traces
from data.dataset_loader import describe, load_dataset, row_l2_normalize, train_test_split
from db.ledger_manager import LedgerManager
from models.base_objective import BaseObjective
from models.exceptions import DpBenchError, InfeasibleBudgetError
from models.models import (
    Algorithm,
    CurvatureConfig,
    CurvatureTrace,
    Dataset,
    ExperimentConfig,
    GdConfig,
    LossKind,
    LossSpec,
    PrivacyBudget,
    ResultRow,
    Sampling,
    SamplingMode,
    ScalingConfig,
    ScalingFamily,
    ScalingResult,
    SgdConfig,
    SplitSpec,
)
from objectives import ObjectiveLike, make_objective
from optim.gradient_perturbation import dp_gd, dp_sgd
from optim.output_perturbation import (
    max_stable_rate,
    output_perturbation_gd,
    output_perturbation_sgd,
    single_shot_multiplier,
)
from optim.reference import nonprivate_optimum
from optim.schedules import constant, sgd_schedule_for, strongly_convex_gd_settings
from privacy.rdp_accountant import calibrate_noise, sigma_for_gd


logger = logging.getLogger("dp-bench")

OUTPUT_DIR_ENV = "DPBENCH_OUTPUT_DIR"
WORKERS_ENV = "DPBENCH_WORKERS"

SIGNIFICANT_DIGITS = 6
MIN_SCALING_POINTS = 4
MIN_SCALING_REPEATS = 50

RESULT_COLUMNS = list(ResultRow.model_fields)
GRID_COLUMNS = [
    "dataset", "algorithm", "epsilon", "steps", "learning_rate", "noise_multiplier",
    "mean_accuracy", "std_accuracy", "mean_excess_risk", "excess_risk_se", "repeats", "failures",
]
CURVATURE_COLUMNS = ["step", "lambda", "avg_curvature", "min_curvature", "nu_hat", "nu_se"]

ACCOUNTANTS = {
    Algorithm.DP_GD: "rdp",
    Algorithm.DP_SGD: "rdp",
    Algorithm.OUT_GD: "gaussian",
    Algorithm.OUT_SGD: "gaussian",
    Algorithm.NONPRIVATE: "none",
}

ConfigT = TypeVar("ConfigT", bound=BaseModel)
CellT = TypeVar("CellT")


# ---- configuration and data ----------------------------------------------

def apply_env_overrides(cfg: ConfigT) -> ConfigT:
    """Apply DPBENCH_OUTPUT_DIR / DPBENCH_WORKERS to any config that has those fields."""
    fields = type(cfg).model_fields
    updates = {}
    if os.environ.get(OUTPUT_DIR_ENV) and "output_dir" in fields:
        updates["output_dir"] = Path(os.environ[OUTPUT_DIR_ENV])
    if os.environ.get(WORKERS_ENV) and "workers" in fields:
        updates["workers"] = int(os.environ[WORKERS_ENV])
    if not updates:
        return cfg
    logger.info("Environment overrides: %s", updates)
    return type(cfg).model_validate({**cfg.model_dump(), **updates})


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read an ExperimentConfig from JSON.

    Raises:
        pydantic.ValidationError: Unknown keys or invalid values.
        FileNotFoundError: Missing file.
    """
    cfg = ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    return apply_env_overrides(cfg)


def prepare_data(cfg: Union[ExperimentConfig, CurvatureConfig]) -> Tuple[Dataset, Dataset]:
    """Load the configured dataset, normalise rows when asked and split it."""
    ds = load_dataset(cfg.dataset_path, cfg.dataset_format, csv_header=cfg.csv_header, name=cfg.resolved_name)
    if cfg.normalize_rows:
        ds = row_l2_normalize(ds)
    stats = describe(ds)
    logger.info("%s: density=%.4f max row norm=%.4g", ds.name, stats["density"], stats["max_row_norm"])
    return train_test_split(ds, SplitSpec(train_fraction=cfg.train_fraction, seed=cfg.seed))


def run_seed(master: int, algorithm: Algorithm, epsilon: float, steps: int, rate: float, repeat: int, *tags) -> int:
    """64-bit seed hashed from (master, algorithm, epsilon, T, eta, repeat)."""
    key = "|".join([str(master), Algorithm(algorithm).value, repr(float(epsilon)), str(steps),
                    repr(float(rate)), str(repeat), *map(str, tags)])
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "big")


def excess_risk(ds_train: Dataset, spec: ObjectiveLike, params: np.ndarray,
                x_star: Optional[np.ndarray] = None) -> float:
    """F(params) - F(x_*) with the regulariser, x_* certified at gradient norm 1e-10."""
    objective = make_objective(spec, ds_train.num_classes)
    if x_star is None:
        x_star = nonprivate_optimum(ds_train, objective, tol=1e-10)
    return objective.full_objective(ds_train, params) - objective.full_objective(ds_train, x_star)


# ---- concurrency -----------------------------------------------------------

async def run_cells(cells: Sequence[CellT], fn: Callable[[CellT], object], workers: int) -> List[object]:
    """
    Run ``fn`` on every cell with at most ``workers`` in flight.

    Results come back in cell order; a failing cell yields its exception
    instead of aborting the batch.
    """
    semaphore = asyncio.Semaphore(workers)
    loop = asyncio.get_running_loop()

    with ThreadPoolExecutor(max_workers=workers) as executor:
        async def bounded_run(index, cell):
            async with semaphore:
                logger.debug("Running cell %d/%d", index, len(cells))
                return await loop.run_in_executor(executor, fn, cell)

        return await asyncio.gather(*(bounded_run(i, c) for i, c in enumerate(cells, 1)), return_exceptions=True)


# ---- benchmark runs --------------------------------------------------------

class GridCell(BaseModel):
    """One seeded run at one grid point."""

    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm
    epsilon: float
    steps: int
    learning_rate: float
    noise_multiplier: float
    repeat: int
    seed: int


class CellOutcome(BaseModel):
    cell: GridCell
    accuracy: float
    excess_risk: float


class ExperimentReport(BaseModel):
    """Rows of a run together with what kept it from being complete."""

    rows: List[ResultRow]
    missing: List[str] = []
    violations: List[dict] = []
    files: List[Path] = []

    @property
    def complete(self) -> bool:
        return not self.missing and not self.violations and all(r.feasible for r in self.rows)


class _RunContext:
    """Read-only state shared by every cell of one experiment."""

    def __init__(self, cfg: ExperimentConfig, train: Dataset, test: Dataset,
                 objective: BaseObjective, x_star: np.ndarray, delta: float):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.objective = objective
        self.x_star = x_star
        self.delta = delta
        self.traces_dir = Path(cfg.output_dir) / "traces"

    def budget(self, epsilon: float) -> PrivacyBudget:
        return PrivacyBudget(epsilon=epsilon, delta=self.delta)

    def run_cell(self, cell: GridCell) -> CellOutcome:
        cfg = self.cfg
        z = 0.0 if cfg.force_zero_noise else cell.noise_multiplier
        record = cfg.write_traces
        trace = None

        if cell.algorithm is Algorithm.DP_GD:
            sigma = sigma_for_gd(self.objective.clip_threshold, self.train.n, z)
            params, trace = dp_gd(self.train, self.objective, GdConfig(
                steps=cell.steps, schedule=constant(cell.learning_rate), sigma=sigma,
                seed=cell.seed, record_objective=record,
            ))
        elif cell.algorithm is Algorithm.DP_SGD:
            params, trace = dp_sgd(self.train, self.objective, SgdConfig(
                steps=cell.steps, schedule=sgd_schedule_for(cell.learning_rate, cell.steps),
                noise_multiplier=z, sampling=Sampling(mode=SamplingMode.POISSON, ratio=cfg.sampling_ratio),
                seed=cell.seed, record_objective=record,
            ))
        elif cell.algorithm is Algorithm.OUT_GD:
            params = output_perturbation_gd(self.train, self.objective, self.budget(cell.epsilon), cell.steps,
                                             cell.learning_rate, seed=cell.seed, noise_multiplier=z)
        else:
            params = output_perturbation_sgd(self.train, self.objective, self.budget(cell.epsilon),
                                             cell.learning_rate, seed=cell.seed, noise_multiplier=z)

        if trace is not None and record:
            name = f"{cell.algorithm.value}_eps{cell.epsilon:g}_T{cell.steps}_lr{cell.learning_rate:g}_r{cell.repeat}.jsonl"
            (self.traces_dir / name).write_text(trace.to_jsonl(), encoding="utf-8")

        return CellOutcome(
            cell=cell,
            accuracy=self.objective.accuracy(self.test, params),
            excess_risk=excess_risk(self.train, self.objective, params, self.x_star),
        )


def _calibrate(algorithm: Algorithm, budget: PrivacyBudget, q: float, steps: int) -> float:
    if algorithm is Algorithm.DP_GD:
        return calibrate_noise(budget, 1.0, steps)
    if algorithm is Algorithm.DP_SGD:
        return calibrate_noise(budget, q, steps)
    return single_shot_multiplier(budget)


def _steps_grid(algorithm: Algorithm, cfg: ExperimentConfig, n: int) -> List[int]:
    # output-perturbation SGD always makes exactly one pass
    return [n] if algorithm is Algorithm.OUT_SGD else list(cfg.steps_grid)


def _learning_rates(algorithm: Algorithm, ctx: _RunContext) -> List[float]:
    rates = ctx.cfg.resolved_learning_rates
    if ACCOUNTANTS[algorithm] != "gaussian":
        return list(rates)
    # output perturbation sensitivities need eta <= 1/beta_hat
    cap = max_stable_rate(ctx.objective, ctx.train)
    if any(rate > cap for rate in rates):
        logger.warning("Clamping %s learning rates %s to 1/beta=%.4g", algorithm.value, rates, cap)
    return sorted({min(rate, cap) for rate in rates})


def build_cells(ctx: _RunContext) -> Tuple[List[GridCell], Dict[Tuple[Algorithm, float], int]]:
    """
    Every (algorithm, epsilon, T, eta, repeat) cell with its calibrated z.

    Returns:
        (cells, number of infeasible T values per (algorithm, epsilon))
    """
    cfg = ctx.cfg
    cells: List[GridCell] = []
    infeasible: Dict[Tuple[Algorithm, float], int] = {}
    noise: Dict[Tuple[Algorithm, float, int], float] = {}

    for algorithm in cfg.algorithms:
        if algorithm is Algorithm.NONPRIVATE:
            continue
        rates = _learning_rates(algorithm, ctx)
        for epsilon in cfg.epsilons:
            for steps in _steps_grid(algorithm, cfg, ctx.train.n):
                key = (algorithm, epsilon, 1 if ACCOUNTANTS[algorithm] == "gaussian" else steps)
                if key not in noise:
                    try:
                        noise[key] = _calibrate(algorithm, ctx.budget(epsilon), cfg.sampling_ratio, steps)
                    except InfeasibleBudgetError as e:
                        logger.warning("Infeasible budget for %s eps=%g T=%d: %s", algorithm.value, epsilon, steps, e)
                        infeasible[(algorithm, epsilon)] = infeasible.get((algorithm, epsilon), 0) + 1
                        continue
                    logger.info("Calibrated z=%.5g for %s eps=%g T=%d", noise[key], algorithm.value, epsilon, steps)
                for rate in rates:
                    for repeat in range(cfg.repeats):
                        cells.append(GridCell(
                            algorithm=algorithm, epsilon=epsilon, steps=steps, learning_rate=rate,
                            noise_multiplier=noise[key], repeat=repeat,
                            seed=run_seed(cfg.seed, algorithm, epsilon, steps, rate, repeat),
                        ))
    return cells, infeasible


def aggregate_grid(dataset: str, cells: Sequence[GridCell], results: Sequence[object]) -> pd.DataFrame:
    """Keyed merge of cell outcomes into one row per grid point."""
    records, failures = [], {}
    for cell, result in zip(cells, results):
        key = (cell.algorithm.value, cell.epsilon, cell.steps, cell.learning_rate)
        if isinstance(result, Exception):
            logger.error("Cell %s eps=%g T=%d lr=%g repeat=%d failed: %s", cell.algorithm.value, cell.epsilon,
                         cell.steps, cell.learning_rate, cell.repeat, result)
            failures[key] = failures.get(key, 0) + 1
            continue
        records.append({
            "algorithm": cell.algorithm.value, "epsilon": cell.epsilon, "steps": cell.steps,
            "learning_rate": cell.learning_rate, "noise_multiplier": cell.noise_multiplier,
            "repeat": cell.repeat, "accuracy": result.accuracy, "excess_risk": result.excess_risk,
        })
    if not records:
        return pd.DataFrame(columns=GRID_COLUMNS)

    frame = pd.DataFrame(records).sort_values(["algorithm", "epsilon", "steps", "learning_rate", "repeat"])
    grid = (
        frame.groupby(["algorithm", "epsilon", "steps", "learning_rate", "noise_multiplier"], sort=True)
        .agg(
            mean_accuracy=("accuracy", "mean"),
            std_accuracy=("accuracy", "std"),
            mean_excess_risk=("excess_risk", "mean"),
            risk_std=("excess_risk", "std"),
            repeats=("accuracy", "size"),
        )
        .reset_index()
    )
    grid["std_accuracy"] = grid["std_accuracy"].fillna(0.0)
    grid["excess_risk_se"] = grid["risk_std"].fillna(0.0) / np.sqrt(grid["repeats"])
    grid["failures"] = [
        failures.get((a, e, t, r), 0)
        for a, e, t, r in zip(grid["algorithm"], grid["epsilon"], grid["steps"], grid["learning_rate"])
    ]
    grid.insert(0, "dataset", dataset)
    return grid[GRID_COLUMNS]


def select_grid_point(grid: pd.DataFrame) -> pd.Series:
    """Best mean accuracy; ties go to the smaller T, then the smaller eta."""
    ordered = grid.sort_values(
        ["mean_accuracy", "steps", "learning_rate"], ascending=[False, True, True], kind="mergesort"
    )
    return ordered.iloc[0]


def _selected_row(ctx: _RunContext, algorithm: Algorithm, epsilon: float, best: pd.Series) -> ResultRow:
    return ResultRow(
        dataset=ctx.train.name,
        algorithm=algorithm,
        epsilon=epsilon,
        delta=ctx.delta,
        steps=int(best["steps"]),
        learning_rate=float(best["learning_rate"]),
        noise_multiplier=0.0 if ctx.cfg.force_zero_noise else float(best["noise_multiplier"]),
        sampling_ratio=ctx.cfg.sampling_ratio if algorithm is Algorithm.DP_SGD else 1.0,
        accountant=ACCOUNTANTS[algorithm],
        mean_accuracy=float(best["mean_accuracy"]),
        std_accuracy=float(best["std_accuracy"]),
        mean_excess_risk=float(best["mean_excess_risk"]),
        excess_risk_se=float(best["excess_risk_se"]),
        repeats=int(best["repeats"]),
    )


async def run_experiment_async(cfg: ExperimentConfig) -> ExperimentReport:
    """
    Run the benchmark a config describes and write its artifacts.

    Writes ``results.csv`` (one selected row per algorithm and epsilon),
    ``grid.csv`` (every grid point), ``traces/*.jsonl``, ``ledger.db`` and
    ``manifest.json`` under ``cfg.output_dir``.

    Args:
        cfg: Experiment configuration.

    Returns:
        ExperimentReport with the rows, missing rows and ledger violations.
    """
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.write_traces:
        (output_dir / "traces").mkdir(exist_ok=True)

    train, test = prepare_data(cfg)
    objective = make_objective(cfg.loss_spec(), train.num_classes)
    delta = cfg.delta if cfg.delta is not None else 1.0 / train.n ** 2
    x_star = nonprivate_optimum(train, objective, tol=1e-10)
    ctx = _RunContext(cfg, train, test, objective, x_star, delta)
    if cfg.force_zero_noise:
        logger.warning("Noise forced to zero: rows carry no privacy guarantee")

    cells, infeasible = build_cells(ctx)
    logger.info("Running %d cells on %d workers", len(cells), cfg.workers)
    results = await run_cells(cells, ctx.run_cell, cfg.workers)
    grid = aggregate_grid(train.name, cells, results)

    rows: List[ResultRow] = []
    missing: List[str] = []
    for algorithm in cfg.algorithms:
        for epsilon in cfg.epsilons:
            if algorithm is Algorithm.NONPRIVATE:
                rows.append(ResultRow(
                    dataset=train.name, algorithm=algorithm, epsilon=epsilon, delta=delta,
                    accountant=ACCOUNTANTS[algorithm], mean_accuracy=objective.accuracy(test, x_star),
                    std_accuracy=0.0, mean_excess_risk=0.0, excess_risk_se=0.0, repeats=1,
                ))
                continue
            points = grid[(grid["algorithm"] == algorithm.value) & (grid["epsilon"] == epsilon)]
            if not points.empty:
                best = select_grid_point(points)
                logger.info("Selected %s eps=%g: T=%d lr=%g acc=%.2f%%", algorithm.value, epsilon,
                            best["steps"], best["learning_rate"], best["mean_accuracy"])
                rows.append(_selected_row(ctx, algorithm, epsilon, best))
            elif infeasible.get((algorithm, epsilon)):
                rows.append(ResultRow(dataset=train.name, algorithm=algorithm, epsilon=epsilon, delta=delta,
                                      accountant=ACCOUNTANTS[algorithm], repeats=cfg.repeats, feasible=False))
            else:
                logger.error("No successful cell for %s eps=%g", algorithm.value, epsilon)
                missing.append(f"{algorithm.value}@{epsilon:g}")

    run_id = cfg.config_hash()
    ledger = LedgerManager(output_dir / "ledger.db")
    ledger.clear_run(run_id)
    for row in rows:
        ledger.record(run_id, row)
    violations = ledger.audit(run_id)

    files = []
    if rows:
        files.append(emit_table(rows, output_dir / "results.csv"))
    if not grid.empty:
        files.append(emit_table(grid.to_dict("records"), output_dir / "grid.csv", columns=GRID_COLUMNS))
    if files:
        write_manifest(output_dir, files, run_id, run_name="run", extra={
            "dataset": describe(train),
            "delta": delta,
            "hyperparameter_selection_charged": False,
            "force_zero_noise": cfg.force_zero_noise,
            "missing_rows": missing,
            "ledger_violations": len(violations),
            "cells": len(cells),
        })
    return ExperimentReport(rows=rows, missing=missing, violations=violations, files=files)


def run_experiment(cfg: ExperimentConfig) -> List[ResultRow]:
    return asyncio.run(run_experiment_async(cfg)).rows


# ---- rate check ------------------------------------------------------------

def synthetic_logistic_task(n: int, p: int, signal: float = 1.0, seed: int = 0) -> Dataset:
    """
    Unit-norm Gaussian records with labels from a logistic model.

    The parameter has norm ``signal``; both classes are always present.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    w = rng.standard_normal(p)
    w *= signal / max(float(np.linalg.norm(w)), 1e-12)
    labels = (rng.random(n) < expit(x @ w)).astype(np.int64)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return Dataset(features=sparse.csr_matrix(x), labels=labels, num_classes=2,
                   label_values=(-1.0, 1.0), name=f"synthetic_n{n}_p{p}", split="train")


async def scaling_study_async(family: Union[ScalingFamily, str], points: Sequence[float],
                              base: ScalingConfig) -> ScalingResult:
    """
    Least-squares slope of log(mean excess risk) against log(epsilon) or log(n).

    Each point runs ``base.repeats`` DP-GD runs with eta = 1/beta_hat and
    T = ceil(2 log n / (eta nu_hat)), nu_hat = tr(H(0))/p, capped at
    ``base.max_steps``.

    Raises:
        ValueError: Fewer than 4 points or fewer than 50 repeats.
        DpBenchError: A point's mean excess risk is not positive.
    """
    family = ScalingFamily(family)
    if len(points) < MIN_SCALING_POINTS:
        raise ValueError(f"scaling study needs at least {MIN_SCALING_POINTS} points")
    if base.repeats < MIN_SCALING_REPEATS:
        raise ValueError(f"scaling study needs at least {MIN_SCALING_REPEATS} repeats per point")

    spec = LossSpec(kind=LossKind.LOGISTIC, lam=base.lam, clip_threshold=base.clip_threshold)
    means, ses, steps_used = [], [], []
    for point in points:
        n = int(point) if family is ScalingFamily.N else base.n
        epsilon = float(point) if family is ScalingFamily.EPSILON else base.epsilon
        ds = synthetic_logistic_task(n, base.p, base.signal, base.seed)
        objective = make_objective(spec, ds.num_classes)
        nu_hat = average_curvature(objective.hessian(ds, objective.zeros(ds)))
        rate, steps = strongly_convex_gd_settings(objective.smoothness_bound(ds), nu_hat, n)
        steps = min(steps, base.max_steps)
        delta = base.delta if base.delta is not None else 1.0 / n ** 2
        z = 0.0 if base.force_zero_noise else calibrate_noise(PrivacyBudget(epsilon=epsilon, delta=delta), 1.0, steps)
        sigma = sigma_for_gd(base.clip_threshold, n, z)
        f_star = objective.full_objective(ds, nonprivate_optimum(ds, objective, tol=1e-10))

        def run_one(seed: int) -> float:
            params, _ = dp_gd(ds, objective, GdConfig(steps=steps, schedule=constant(rate), sigma=sigma,
                                                      seed=seed, record_objective=False))
            return objective.full_objective(ds, params) - f_star

        seeds = [run_seed(base.seed, Algorithm.DP_GD, epsilon, steps, rate, r, f"n={n}") for r in range(base.repeats)]
        results = await run_cells(seeds, run_one, base.workers)
        failed = [r for r in results if isinstance(r, Exception)]
        if failed:
            raise failed[0]
        risks = np.asarray(results, dtype=float)
        mean = float(risks.mean())
        if mean <= 0.0:
            raise DpBenchError(f"non-positive excess risk {mean:.3e} at {family.value}={point:g}")
        means.append(mean)
        ses.append(float(risks.std(ddof=1) / math.sqrt(risks.size)))
        steps_used.append(steps)
        logger.info("Scaling %s=%g: T=%d eta=%.4g z=%.4g risk=%.4g +- %.2g",
                    family.value, point, steps, rate, z, mean, ses[-1])

    fit = linregress(np.log(np.asarray(points, dtype=float)), np.log(means))
    logger.info("Fitted slope %.3f +- %.3f", fit.slope, fit.stderr)
    return ScalingResult(family=family, points=[float(x) for x in points], steps=steps_used,
                         mean_risks=means, risk_ses=ses, slope=float(fit.slope), slope_se=float(fit.stderr))


def scaling_study(family: Union[ScalingFamily, str], points: Sequence[float], base: ScalingConfig) -> ScalingResult:
    return asyncio.run(scaling_study_async(family, points, base))


# ---- curvature -------------------------------------------------------------

def run_curvature(cfg: CurvatureConfig) -> List[CurvatureTrace]:
    """
    Train one DP-GD path on the training split and sample its curvature.

    Writes ``curvature_<dataset>.csv`` and updates ``manifest.json``. With
    ``nu_sigma`` set, the manifest also records the path-level nu per lam.
    """
    train, _ = prepare_data(cfg)
    spec = LossSpec(kind=LossKind.LOGISTIC, lam=cfg.train_lam, clip_threshold=cfg.clip_threshold)
    objective = make_objective(spec, train.num_classes)

    sigma = 0.0
    if cfg.epsilon is not None:
        delta = cfg.delta if cfg.delta is not None else 1.0 / train.n ** 2
        z = calibrate_noise(PrivacyBudget(epsilon=cfg.epsilon, delta=delta), 1.0, cfg.steps)
        sigma = sigma_for_gd(cfg.clip_threshold, train.n, z)
        logger.info("Curvature path: eps=%g z=%.5g sigma=%.4g", cfg.epsilon, z, sigma)
    gd_cfg = GdConfig(steps=cfg.steps, schedule=constant(cfg.learning_rate), sigma=sigma,
                      seed=cfg.seed, snapshot_stride=cfg.stride, record_objective=False)

    if cfg.retrain:
        traces = retrained_curvature_traces(train, objective, gd_cfg, cfg.lambdas, nu_sigma=cfg.nu_sigma)
    else:
        _, run = dp_gd(train, objective, gd_cfg)
        traces = curvature_trace(train, objective, run.snapshots, cfg.stride, cfg.lambdas,
                                 steps=run.snapshot_steps, nu_sigma=cfg.nu_sigma,
                                 nu_draws=cfg.nu_draws, seed=cfg.seed)

    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = emit_plot_data(traces, output_dir / f"curvature_{cfg.resolved_name}.csv")
    extra = {"dataset": describe(train), "lambdas": list(cfg.lambdas), "retrain": cfg.retrain}
    if cfg.nu_sigma is not None:
        extra["path_nu"] = {f"{trace.lam:g}": path_nu(trace) for trace in traces}
        logger.info("Path-level nu: %s", extra["path_nu"])
    write_manifest(output_dir, [path], cfg.config_hash(), run_name=f"curvature_{cfg.resolved_name}", extra=extra)
    return traces


# ---- emission --------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return format(float(value), f".{SIGNIFICANT_DIGITS}g")
    return str(value)


def _as_records(rows: Iterable) -> List[dict]:
    return [row.model_dump(mode="json") if isinstance(row, BaseModel) else dict(row) for row in rows]


def emit_table(rows: Sequence, path: Union[str, Path], columns: Optional[Sequence[str]] = None) -> Path:
    """
    Write rows as CSV with a stable column order and 6 significant digits.

    Args:
        rows: ResultRows, pydantic models or dicts.
        path: Destination file.
        columns: Column order (the first row's keys when omitted).

    Raises:
        ValueError: ``rows`` is empty.
        OSError: The path cannot be written.
    """
    records = _as_records(rows)
    if not records:
        raise ValueError("no rows to emit")
    columns = list(columns or records[0].keys())
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow({c: _format_cell(record.get(c)) for c in columns})
    logger.info("Results written to %s", path)
    return path


def emit_plot_data(data: Union[Sequence, CurvatureTrace, ScalingResult], path: Union[str, Path]) -> Path:
    """CSV of plot series: curvature traces, a scaling result or plain rows."""
    if isinstance(data, ScalingResult):
        return emit_table(data.to_rows(), path)
    if isinstance(data, CurvatureTrace):
        data = [data]
    if data and all(isinstance(item, CurvatureTrace) for item in data):
        records = [row for trace in data for row in trace.to_rows()]
        return emit_table(records, path, columns=CURVATURE_COLUMNS)
    return emit_table(data, path)


def content_hash(path: Union[str, Path]) -> str:
    """Git blob hash: sha1 of b"blob <size>\\0" + content."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\x00" % len(data) + data).hexdigest()


def write_manifest(output_dir: Union[str, Path], files: Sequence[Path], cfg_hash: str,
                   run_name: str = "run", extra: Optional[dict] = None) -> Path:
    """
    Merge provenance for ``files`` into ``output_dir/manifest.json``.

    Each file maps to its git-style content hash and the run that wrote it;
    each run records its config hash and ``extra``.
    """
    path = Path(output_dir) / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    entries = manifest.setdefault("files", {})
    for file in files:
        file = Path(file)
        entries[file.name] = {"sha1": content_hash(file), "bytes": file.stat().st_size, "run": run_name}
    manifest.setdefault("runs", {})[run_name] = {"config_hash": cfg_hash, **(extra or {})}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    logger.info("Manifest written to %s", path)
    return path
