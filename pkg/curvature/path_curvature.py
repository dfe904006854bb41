"""
Curvature Samples.

Measures the average curvature tr(H)/p, the minimum curvature lambda_min(H)
and a Monte-Carlo estimate of the expected curvature seen by noisy iterates,

    nu_hat = mean_j <grad F(x - z_j), x - z_j - x_*> / mean_j ||x - z_j - x_*||^2,
    z_j ~ N(0, sigma^2 I),

along a training path.

Functions:
    average_curvature: tr(H)/p.
    min_curvature: Smallest Hessian eigenvalue.
    estimate_nu: Ratio-of-means estimate with a delta-method standard error.
    curvature_trace: Sample snapshots of one path under several regularisers.
    path_nu: Conservative path-level aggregate min(nu_hat - se).

Example:
    >>> _, trace = dp_gd(ds, spec, GdConfig(steps=200, snapshot_stride=5, ...))
    >>> traces = curvature_trace(ds, spec, trace.snapshots, 5, [0.0, 1e-4, 1e-3],
    ...                          steps=trace.snapshot_steps)
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from curvature.eigensolver import min_eigenvalue
from models.base_objective import BaseObjective
from models.exceptions import DpBenchError
from models.models import CurvatureSample, CurvatureTrace, Dataset, GdConfig, HessianMatrix
from objectives import ObjectiveLike, make_objective
from optim.gradient_perturbation import dp_gd
from optim.reference import nonprivate_optimum


logger = logging.getLogger(__name__)

MIN_DRAWS = 100
DEFAULT_DRAWS = 1000
DEFAULT_STRIDE = 5


def average_curvature(h: HessianMatrix) -> float:
    return float(np.trace(h.values)) / h.p


def min_curvature(h: HessianMatrix, tol: float = 1e-8) -> float:
    """Smallest eigenvalue; GLM Hessians seed the inverse iteration at their regulariser."""
    return min_eigenvalue(h.values, shift=h.lam, tol=tol)


def _with_lam(objective: BaseObjective, lam: float) -> BaseObjective:
    return objective.model_copy(update={"lam": lam})


def estimate_nu(
    spec: ObjectiveLike,
    ds: Dataset,
    x: np.ndarray,
    x_star: np.ndarray,
    sigma: float,
    m: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Monte-Carlo expected curvature at ``x`` under Gaussian perturbations.

    Args:
        spec: LossSpec or objective (gradient is unclipped and includes lam x).
        ds: Training set.
        x: Centre of the perturbation.
        x_star: Minimiser of the regularised objective.
        sigma: Perturbation std.
        m: Number of draws, at least 100.
        seed: Seed of the dedicated draw stream.

    Returns:
        (nu_hat, standard_error)

    Raises:
        ValueError: m < 100 or sigma <= 0.
        DpBenchError: The mean squared distance is not positive.
    """
    if m < MIN_DRAWS:
        raise ValueError(f"estimate_nu needs m >= {MIN_DRAWS} draws")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    objective = make_objective(spec, ds.num_classes)
    x = objective.check_parameters(ds, x)
    x_star = objective.check_parameters(ds, x_star)

    draws = np.random.default_rng(seed).normal(0.0, sigma, size=(m, x.size))
    points = x - draws
    offsets = points - x_star
    numerators = np.einsum("ij,ij->i", objective.full_gradients(ds, points), offsets)
    denominators = np.einsum("ij,ij->i", offsets, offsets)

    mean_den = float(np.mean(denominators))
    if mean_den <= 0.0:
        raise DpBenchError("mean squared distance to x_* is not positive")
    ratio = float(np.mean(numerators)) / mean_den

    cov = np.cov(np.vstack([numerators, denominators]))
    variance = (cov[0, 0] - 2.0 * ratio * cov[0, 1] + ratio ** 2 * cov[1, 1]) / (m * mean_den ** 2)
    return ratio, float(np.sqrt(max(variance, 0.0)))


def _sample_positions(count: int, stride: int, steps: Optional[Sequence[int]]) -> List[Tuple[int, int]]:
    """(index into trace_params, step label) pairs to sample."""
    if steps is not None:
        if len(steps) != count:
            raise ValueError("steps must label every entry of trace_params")
        return list(enumerate(steps))
    return [(i, i + 1) for i in range(0, count, stride)]


def curvature_trace(
    ds: Dataset,
    spec: ObjectiveLike,
    trace_params: Sequence[np.ndarray],
    stride: int,
    lambdas: Sequence[float],
    steps: Optional[Sequence[int]] = None,
    nu_sigma: Optional[float] = None,
    nu_draws: int = DEFAULT_DRAWS,
    x_star: Optional[Dict[float, np.ndarray]] = None,
    seed: int = 0,
) -> List[CurvatureTrace]:
    """
    Curvature along one training path, overlaid for several regularisers.

    ``trace_params`` is either every iterate x_1, x_2, ... (sampled every
    ``stride`` entries, step labels 1, 1 + stride, ...) or already-strided
    snapshots labelled by ``steps``. The data Hessian is computed once per
    sample at the training lam; each overlay lam' adds (lam' - lam) I, which
    shifts every eigenvalue by exactly that amount.

    Args:
        ds: Training set (binary logistic or quadratic, p within the dense limit).
        spec: Objective the path was trained on.
        trace_params: Iterates of the path.
        stride: Sample stride.
        lambdas: Overlay regularisers, one CurvatureTrace each.
        steps: Step labels of ``trace_params`` when they are snapshots.
        nu_sigma: When set, attach nu_hat with this perturbation std.
        nu_draws: Monte-Carlo draws per nu_hat.
        x_star: Minimisers keyed by lam; computed at tol 1e-10 when missing.
        seed: Seed of the nu_hat draws.

    Raises:
        UnsupportedOperationError: The objective has no dense Hessian.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    objective = make_objective(spec, ds.num_classes)
    objective.check_compatible(ds)
    positions = _sample_positions(len(trace_params), stride, steps)
    minimisers: Dict[float, np.ndarray] = dict(x_star or {})
    samples: Dict[float, List[CurvatureSample]] = {lam: [] for lam in lambdas}

    for index, step in positions:
        h = objective.hessian(ds, trace_params[index])
        base_avg = average_curvature(h)
        base_min = min_curvature(h)
        for lam in lambdas:
            shift = lam - objective.lam
            nu_hat = nu_se = None
            if nu_sigma is not None:
                overlay = _with_lam(objective, lam)
                if lam not in minimisers:
                    minimisers[lam] = nonprivate_optimum(ds, overlay, tol=1e-10)
                nu_hat, nu_se = estimate_nu(overlay, ds, trace_params[index], minimisers[lam],
                                            nu_sigma, nu_draws, seed=seed + step)
            samples[lam].append(CurvatureSample(
                step=step,
                avg_curvature=base_avg + shift,
                min_curvature=base_min + shift,
                nu_hat=nu_hat,
                nu_se=nu_se,
            ))
        logger.debug("Sample at step %d: avg=%.4g min=%.4g", step, base_avg, base_min)

    logger.info("Curvature trace on %s: %d samples x %d regularisers", ds.name, len(positions), len(lambdas))
    return [CurvatureTrace(samples=samples[lam], lam=lam, dataset=ds.name, stride=stride) for lam in lambdas]


def retrained_curvature_traces(
    ds: Dataset,
    spec: ObjectiveLike,
    cfg: GdConfig,
    lambdas: Sequence[float],
    nu_sigma: Optional[float] = None,
) -> List[CurvatureTrace]:
    """One DP-GD run per regulariser, each sampled at its own lam."""
    objective = make_objective(spec, ds.num_classes)
    stride = cfg.snapshot_stride or DEFAULT_STRIDE
    run_cfg = cfg.model_copy(update={"snapshot_stride": stride, "record_objective": False})
    traces = []
    for lam in lambdas:
        retrained = _with_lam(objective, lam)
        _, run = dp_gd(ds, retrained, run_cfg)
        traces.extend(curvature_trace(ds, retrained, run.snapshots, stride, [lam],
                                      steps=run.snapshot_steps, nu_sigma=nu_sigma, seed=cfg.seed))
    return traces


def path_nu(trace: CurvatureTrace) -> float:
    """min over samples of (nu_hat - se).

    Raises:
        ValueError: No sample carries a nu_hat.
    """
    values = [s.nu_hat - (s.nu_se or 0.0) for s in trace.samples if s.nu_hat is not None]
    if not values:
        raise ValueError("trace has no nu_hat samples")
    return min(values)
