"""
Gradient-Perturbed Optimisers.

DP-GD adds N(0, sigma_t^2 I) to the clipped full gradient at every step;
DP-SGD clips per-example gradients of a sampled lot and adds Gaussian noise
of std z*C. Both start at x_1 = 0, draw noise from a generator spawned from
the run seed (sampling uses a sibling generator) and abort on non-finite
iterates.

Functions:
    dp_gd: Differentially private full-batch gradient descent.
    dp_sgd: Differentially private stochastic gradient descent.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from models.base_objective import BaseObjective
from models.exceptions import DivergenceError
from models.models import Dataset, GdConfig, RunTrace, SamplingMode, SgdConfig, StepRecord
from objectives import ObjectiveLike, make_objective


logger = logging.getLogger(__name__)


def run_generators(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(noise, sampling) generators of one run."""
    noise_seq, sampling_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(noise_seq), np.random.default_rng(sampling_seq)


class _TraceRecorder:
    """Collects step records, snapshots and the running average of one run."""

    def __init__(self, objective: BaseObjective, ds: Dataset, trace: RunTrace,
                 snapshot_stride: Optional[int], record_objective: bool,
                 average: bool, eval_ds: Optional[Dataset]):
        self.objective = objective
        self.ds = ds
        self.trace = trace
        self.stride = snapshot_stride
        self.record_objective = record_objective
        self.eval_ds = eval_ds
        self.running_sum = np.zeros(objective.parameter_size(ds.p)) if average else None

    def snapshot(self, t: int, x: np.ndarray) -> None:
        if self.stride and (t - 1) % self.stride == 0:
            self.trace.snapshots.append(x.copy())
            self.trace.snapshot_steps.append(t)

    def step(self, t: int, x_next: np.ndarray, grad_norm: float, rate: float) -> None:
        norm = float(np.linalg.norm(x_next))
        if not np.isfinite(norm):
            logger.error("%s diverged at step %d", self.trace.algorithm, t)
            raise DivergenceError(t, norm)
        if self.running_sum is not None:
            self.running_sum += x_next
        self.trace.records.append(
            StepRecord(
                step=t,
                objective=self.objective.full_objective(self.ds, x_next) if self.record_objective else None,
                grad_norm=grad_norm,
                rate=rate,
                accuracy=self.objective.accuracy(self.eval_ds, x_next) if self.eval_ds is not None else None,
            )
        )

    def finish(self, steps: int, x: np.ndarray) -> Tuple[np.ndarray, RunTrace]:
        self.snapshot(steps + 1, x)
        self.trace.final_params = x
        if self.running_sum is None:
            return x, self.trace
        self.trace.averaged_params = self.running_sum / steps
        return self.trace.averaged_params, self.trace


def dp_gd(
    ds: Dataset,
    spec: ObjectiveLike,
    cfg: GdConfig,
    eval_ds: Optional[Dataset] = None,
) -> Tuple[np.ndarray, RunTrace]:
    """
    Differentially private gradient descent.

    For t = 1..T: g_t = mean clipped gradient + lam x_t, z_t ~ N(0, sigma_t^2 I),
    x_{t+1} = x_t - eta_t (g_t + z_t).

    Args:
        ds: Training set.
        spec: LossSpec or objective.
        cfg: Steps, schedule, clipping, noise std, averaging and seed.
        eval_ds: When given, every record carries the accuracy on it.

    Returns:
        (x_{T+1} or the average of x_2..x_{T+1}, RunTrace)

    Raises:
        DivergenceError: An iterate is not finite.
    """
    objective = make_objective(spec, ds.num_classes)
    objective.check_compatible(ds)
    threshold = cfg.clip_threshold or objective.clip_threshold
    noise_rng, _ = run_generators(cfg.seed)
    recorder = _TraceRecorder(
        objective, ds, RunTrace(algorithm="dp_gd", seed=cfg.seed, noise_std=cfg.sigma),
        cfg.snapshot_stride, cfg.record_objective, cfg.average_iterates, eval_ds,
    )

    x = objective.zeros(ds)
    for t in range(1, cfg.steps + 1):
        recorder.snapshot(t, x)
        g = objective.full_gradient(ds, x, clipped=True, clip_threshold=threshold)
        rate = cfg.schedule.rate(t)
        step = g if cfg.sigma == 0 else g + noise_rng.normal(0.0, cfg.sigma, size=g.size)
        x = x - rate * step
        recorder.step(t, x, float(np.linalg.norm(g)), rate)

    logger.debug("dp_gd finished: T=%d sigma=%.4g seed=%d", cfg.steps, cfg.sigma, cfg.seed)
    return recorder.finish(cfg.steps, x)


def _project(x: np.ndarray, radius: Optional[float]) -> np.ndarray:
    if radius is None:
        return x
    norm = float(np.linalg.norm(x))
    return x if norm <= radius else x * (radius / norm)


def dp_sgd(
    ds: Dataset,
    spec: ObjectiveLike,
    cfg: SgdConfig,
    eval_ds: Optional[Dataset] = None,
) -> Tuple[np.ndarray, RunTrace]:
    """
    Differentially private stochastic gradient descent.

    single:       g_t = clip(grad f_i(x_t)) + lam x_t, noise N(0, (zC)^2 I) added to g_t.
    poisson:      each record joins the lot with probability q.
    fixed_ratio:  a uniform lot of round(q n) records (the whole set when q = 1).
    Lot modes:    g_t = (sum_lot clip(grad f_i) + N(0, (zC)^2 I)) / (q n) + lam x_t.

    An empty Poisson lot makes a noise-only step. With ``projection_radius``
    every iterate is projected onto the L2 ball of that radius.
    """
    objective = make_objective(spec, ds.num_classes)
    objective.check_compatible(ds)
    threshold = cfg.clip_threshold or objective.clip_threshold
    noise_std = cfg.noise_multiplier * threshold
    noise_rng, sampling_rng = run_generators(cfg.seed)
    mode = cfg.sampling.mode
    q = cfg.sampling.ratio if mode is not SamplingMode.SINGLE else 1.0 / ds.n
    lot_size = max(1, int(round(q * ds.n)))
    recorder = _TraceRecorder(
        objective, ds, RunTrace(algorithm="dp_sgd", seed=cfg.seed, noise_std=noise_std),
        cfg.snapshot_stride, cfg.record_objective, cfg.average_iterates, eval_ds,
    )

    x = objective.zeros(ds)
    for t in range(1, cfg.steps + 1):
        recorder.snapshot(t, x)
        noise = noise_rng.normal(0.0, noise_std, size=x.size) if noise_std > 0 else None

        if mode is SamplingMode.SINGLE:
            idx = np.array([sampling_rng.integers(ds.n)])
            g = objective.gradient_sum(ds, x, idx=idx, clip_threshold=threshold) + objective.lam * x
            grad_norm = float(np.linalg.norm(g))
            if noise is not None:
                g = g + noise
        else:
            if mode is SamplingMode.POISSON:
                idx = np.flatnonzero(sampling_rng.random(ds.n) < q)
            elif q >= 1.0:
                idx = None
            else:
                idx = np.sort(sampling_rng.choice(ds.n, size=lot_size, replace=False))
            if idx is not None and idx.size == 0:
                total = np.zeros_like(x)
            else:
                total = objective.gradient_sum(ds, x, idx=idx, clip_threshold=threshold)
            scale = q * ds.n
            grad_norm = float(np.linalg.norm(total / scale + objective.lam * x))
            if noise is not None:
                total = total + noise
            g = total / scale + objective.lam * x

        rate = cfg.schedule.rate(t)
        x = _project(x - rate * g, cfg.projection_radius)
        recorder.step(t, x, grad_norm, rate)

    logger.debug("dp_sgd finished: T=%d z=%.4g mode=%s seed=%d", cfg.steps, cfg.noise_multiplier, mode.value, cfg.seed)
    return recorder.finish(cfg.steps, x)
