"""
Output-Perturbation Baselines.

Both baselines train without noise and add one Gaussian draw to the final
parameters, scaled by the L2 sensitivity of the training procedure under
single-record replacement and a single-shot Gaussian accountant.

Functions:
    max_stable_rate: Rate cap 1/beta_hat of both baselines.
    gd_sensitivity: Contraction-based sensitivity of clipped full-batch GD.
    output_perturbation_gd: Out-GD baseline.
    one_pass_sgd: Noise-free single pass of clipped permuted SGD.
    output_perturbation_sgd: Out-SGD baseline.
"""

import logging
import math
from typing import Optional

import numpy as np

from models.base_objective import BaseObjective
from models.exceptions import UnsupportedOperationError
from models.models import Dataset, GdConfig, PrivacyBudget
from objectives import ObjectiveLike, make_objective
from optim.gradient_perturbation import dp_gd, run_generators
from optim.schedules import constant
from privacy.rdp_accountant import calibrate_noise


logger = logging.getLogger(__name__)


def max_stable_rate(spec: ObjectiveLike, ds: Dataset) -> float:
    """Largest rate 1/beta_hat the sensitivity bounds hold for (inf without a smoothness bound)."""
    objective = make_objective(spec, ds.num_classes)
    try:
        return 1.0 / objective.smoothness_bound(ds)
    except UnsupportedOperationError:
        return math.inf


def _check_rate(objective: BaseObjective, ds: Dataset, rate: float) -> None:
    cap = max_stable_rate(objective, ds)
    if rate > cap:
        raise ValueError(f"learning rate {rate:g} exceeds 1/beta={cap:.6g}; the sensitivity bound does not hold")


def single_shot_multiplier(budget: PrivacyBudget) -> float:
    """Noise multiplier of one Gaussian release meeting ``budget``."""
    return calibrate_noise(budget, q=1.0, steps=1)


def gd_sensitivity(n: int, clip_threshold: float, rate: float, lam: float, steps: int) -> float:
    """(2 eta C / n) * sum_{t=0}^{T-1} (1 - eta lam)^t."""
    contraction = 1.0 - rate * lam
    if lam == 0.0 or contraction == 1.0:
        raise UnsupportedOperationError("output perturbation GD needs lam > 0 for contraction")
    geometric = (1.0 - contraction ** steps) / (1.0 - contraction)
    return 2.0 * rate * clip_threshold / n * geometric


def output_perturbation_gd(
    ds: Dataset,
    spec: ObjectiveLike,
    budget: PrivacyBudget,
    steps: int,
    rate: float,
    seed: int = 0,
    noise_multiplier: Optional[float] = None,
) -> np.ndarray:
    """
    Clipped full-batch GD for T steps from 0, then N(0, (z * Delta)^2 I).

    Raises:
        UnsupportedOperationError: lam == 0.
        ValueError: rate > 1/beta_hat.
    """
    objective = make_objective(spec, ds.num_classes)
    delta = gd_sensitivity(ds.n, objective.clip_threshold, rate, objective.lam, steps)
    _check_rate(objective, ds, rate)
    x, _ = dp_gd(ds, objective, GdConfig(steps=steps, schedule=constant(rate), sigma=0.0,
                                         seed=seed, record_objective=False))
    z = single_shot_multiplier(budget) if noise_multiplier is None else noise_multiplier
    noise_rng, _ = run_generators(seed)
    logger.debug("out_gd: Delta=%.4g z=%.4g", delta, z)
    return x + noise_rng.normal(0.0, z * delta, size=x.size)


def one_pass_sgd(ds: Dataset, spec: ObjectiveLike, rate: float, seed: int = 0) -> np.ndarray:
    """One pass of clipped SGD over a seeded permutation with constant rate."""
    objective = make_objective(spec, ds.num_classes)
    _, sampling_rng = run_generators(seed)
    x = objective.zeros(ds)
    for i in sampling_rng.permutation(ds.n):
        g = objective.gradient_sum(ds, x, idx=np.array([i]), clip_threshold=objective.clip_threshold)
        x = x - rate * (g + objective.lam * x)
    return x


def output_perturbation_sgd(
    ds: Dataset,
    spec: ObjectiveLike,
    budget: PrivacyBudget,
    rate: float,
    seed: int = 0,
    noise_multiplier: Optional[float] = None,
) -> np.ndarray:
    """
    Single permuted pass, then Gaussian noise with sensitivity 2 eta C.

    Raises:
        ValueError: rate > 1/beta_hat.
    """
    objective = make_objective(spec, ds.num_classes)
    _check_rate(objective, ds, rate)
    x = one_pass_sgd(ds, objective, rate, seed)
    z = single_shot_multiplier(budget) if noise_multiplier is None else noise_multiplier
    noise_rng, _ = run_generators(seed)
    return x + noise_rng.normal(0.0, z * 2.0 * rate * objective.clip_threshold, size=x.size)
