"""
Learning-rate schedule factories.

Thin constructors over models.Schedule for the rates used in the
convergence results and in the benchmark protocol.
"""

import math
from typing import Tuple

from models.models import Schedule, ScheduleKind

# DP-SGD runs at twice the DP-GD rate and halves it at the middle of training.
SGD_RATE_FACTOR = 2.0


def constant(rate: float) -> Schedule:
    return Schedule(kind=ScheduleKind.CONSTANT, base_rate=rate)


def inverse_nu_t(nu: float) -> Schedule:
    """eta_t = 1/(nu t)."""
    return Schedule(kind=ScheduleKind.INVERSE_NU_T, nu=nu)


def inverse_sqrt(radius: float, gradient_bound: float) -> Schedule:
    """eta_t = D/(G sqrt(t))."""
    return Schedule(kind=ScheduleKind.INVERSE_SQRT, radius=radius, gradient_bound=gradient_bound)


def halve_at_midpoint(rate: float, total_steps: int) -> Schedule:
    return Schedule(kind=ScheduleKind.HALVE_AT_MIDPOINT, base_rate=rate, total_steps=total_steps)


def sgd_schedule_for(gd_rate: float, total_steps: int) -> Schedule:
    """DP-SGD schedule derived from a DP-GD grid rate."""
    return halve_at_midpoint(SGD_RATE_FACTOR * gd_rate, total_steps)


def strongly_convex_gd_settings(beta: float, nu: float, n: int) -> Tuple[float, int]:
    """Step size 1/beta and T = ceil(2 log(n) / (eta nu)) for DP-GD with curvature nu."""
    if beta <= 0 or nu <= 0:
        raise ValueError("beta and nu must be positive")
    rate = 1.0 / beta
    return rate, max(1, math.ceil(2.0 * math.log(n) / (rate * nu)))
