"""
Rényi-DP Accountant.

RDP bookkeeping for the Gaussian mechanism and the Poisson-subsampled
Gaussian mechanism, additive composition, conversion to (epsilon, delta)
and noise calibration by bisection.

Conventions:
    - Full-batch (q = 1) steps use the exact Gaussian RDP alpha / (2 z^2).
    - Subsampled steps use the integer-order binomial expansion
      (1/(alpha-1)) log sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 z^2)),
      evaluated with logsumexp.
    - z is always the ratio of noise std to L2 sensitivity.

Functions:
    rdp_gaussian, rdp_subsampled_gaussian: Per-step RDP at one order.
    rdp_curve: Composed RdpCurve of a MechanismSpec.
    compose, to_epsilon: Composition and (epsilon, delta) conversion.
    epsilon_for: epsilon spent by a mechanism at a given delta.
    calibrate_noise: Smallest z meeting a PrivacyBudget.
    sigma_for_gd: Per-step DP-GD noise std for z.
"""

import logging
import math
from typing import Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from models.exceptions import AccountingOverflowError, InfeasibleBudgetError
from models.models import MechanismSpec, PrivacyBudget, RdpCurve


logger = logging.getLogger(__name__)

DEFAULT_ORDERS: Tuple[float, ...] = tuple(float(a) for a in range(2, 65)) + (128.0, 256.0)

# bisection bracket for z and its relative tolerance
Z_MIN = 1e-3
Z_MAX = 1e6
REL_TOL = 1e-4


def rdp_gaussian(alpha: float, z: float) -> float:
    """RDP of the Gaussian mechanism with noise multiplier z at order alpha."""
    if alpha <= 1:
        raise ValueError(f"order must exceed 1, got {alpha}")
    if z <= 0:
        raise ValueError(f"noise multiplier must be positive, got {z}")
    return alpha / (2.0 * z * z)


def rdp_subsampled_gaussian(alpha: int, q: float, z: float) -> float:
    """
    RDP upper bound of the Poisson-subsampled Gaussian mechanism at integer order alpha.

    Raises:
        ValueError: alpha not an integer >= 2, q outside (0, 1) or z <= 0.
        AccountingOverflowError: The log-space sum is not finite.
    """
    if float(alpha) != int(alpha) or alpha < 2:
        raise ValueError(f"subsampled RDP needs an integer order >= 2, got {alpha}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"sampling ratio must lie in (0, 1), got {q}")
    if z <= 0:
        raise ValueError(f"noise multiplier must be positive, got {z}")
    alpha = int(alpha)
    k = np.arange(alpha + 1, dtype=float)
    log_terms = (
        gammaln(alpha + 1.0) - gammaln(k + 1.0) - gammaln(alpha - k + 1.0)
        + k * math.log(q)
        + (alpha - k) * math.log1p(-q)
        + k * (k - 1.0) / (2.0 * z * z)
    )
    value = float(logsumexp(log_terms)) / (alpha - 1)
    if not math.isfinite(value):
        raise AccountingOverflowError(f"RDP overflow at alpha={alpha}, q={q}, z={z}; reduce the order range")
    # the exact value is >= 0; rounding can leave -1e-17
    return max(value, 0.0)


def _step_values(z: float, q: float, orders: Sequence[float]) -> list:
    if q >= 1.0:
        return [rdp_gaussian(a, z) for a in orders]
    return [rdp_subsampled_gaussian(a, q, z) for a in orders]


def rdp_curve(mechanism: MechanismSpec, orders: Sequence[float] = DEFAULT_ORDERS) -> RdpCurve:
    """Composed RDP curve of ``mechanism`` over ``orders``."""
    orders = tuple(float(a) for a in orders)
    step = RdpCurve(orders=orders, values=tuple(_step_values(mechanism.noise_multiplier, mechanism.sampling_ratio, orders)))
    return compose(step, mechanism.steps)


def compose(curve: RdpCurve, steps: int) -> RdpCurve:
    """T-fold composition: every value multiplied by T."""
    if steps < 1:
        raise ValueError("composition needs T >= 1")
    return RdpCurve(orders=curve.orders, values=tuple(v * steps for v in curve.values))


def to_epsilon_and_order(curve: RdpCurve, delta: float) -> Tuple[float, float]:
    """(epsilon, optimal order) of the standard RDP to (epsilon, delta) conversion."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not curve.orders:
        raise ValueError("empty RDP curve")
    orders = np.asarray(curve.orders)
    candidates = np.asarray(curve.values) + math.log(1.0 / delta) / (orders - 1.0)
    best = int(np.argmin(candidates))
    return float(candidates[best]), float(orders[best])


def to_epsilon(curve: RdpCurve, delta: float) -> float:
    """min over orders of value(alpha) + log(1/delta) / (alpha - 1)."""
    return to_epsilon_and_order(curve, delta)[0]


def epsilon_for(mechanism: MechanismSpec, delta: float, orders: Sequence[float] = DEFAULT_ORDERS) -> float:
    return to_epsilon(rdp_curve(mechanism, orders), delta)


def calibrate_noise(
    budget: PrivacyBudget,
    q: float,
    steps: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
) -> float:
    """
    Smallest noise multiplier z whose T-fold composition meets ``budget``.

    Bisection in log-space over [Z_MIN, Z_MAX] until hi/lo <= 1 + REL_TOL; the
    returned z satisfies the budget and z * (1 - 1e-3) does not.

    Raises:
        InfeasibleBudgetError: Even Z_MAX violates the budget.
    """
    def spent(z: float) -> float:
        return epsilon_for(MechanismSpec(noise_multiplier=z, sampling_ratio=q, steps=steps), budget.delta, orders)

    if spent(Z_MAX) > budget.epsilon:
        raise InfeasibleBudgetError(
            f"epsilon={budget.epsilon} delta={budget.delta} infeasible for q={q}, T={steps} even at z={Z_MAX:g}"
        )
    if spent(Z_MIN) <= budget.epsilon:
        logger.warning("Budget epsilon=%g met at the bracket floor z=%g (q=%g, T=%d)", budget.epsilon, Z_MIN, q, steps)
        return Z_MIN

    lo, hi = Z_MIN, Z_MAX
    while hi / lo > 1.0 + REL_TOL:
        mid = math.sqrt(lo * hi)
        if spent(mid) <= budget.epsilon:
            hi = mid
        else:
            lo = mid
    logger.debug("Calibrated z=%.6g for epsilon=%g delta=%g q=%g T=%d", hi, budget.epsilon, budget.delta, q, steps)
    return hi


def sigma_for_gd(clip_threshold: float, n: int, z: float) -> float:
    """
    Per-step DP-GD noise std z * 2C/n.

    2C/n is the L2 sensitivity of the mean clipped gradient when one record
    is replaced.
    """
    if clip_threshold <= 0 or n <= 0 or z < 0:
        raise ValueError("sigma_for_gd needs positive C, n and nonnegative z")
    return z * (2.0 * clip_threshold / n)
