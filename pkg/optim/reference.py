"""
Non-private reference optimiser.

Provides the certified minimiser x_* that excess empirical risk is
measured against. A scipy L-BFGS warm start gets close; full-batch gradient
descent with backtracking then runs until ||grad F|| <= tol, so the returned
point is always certified by its gradient norm.
"""

import logging
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from models.exceptions import ConvergenceError, UnsupportedOperationError
from models.models import Dataset
from objectives import ObjectiveLike, make_objective


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITERATIONS = 1_000_000
# relative slack for sufficient-decrease tests below float resolution
_F_FLOOR = 1e-15


def nonprivate_optimum(
    ds: Dataset,
    spec: ObjectiveLike,
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_ITERATIONS,
    warm_start: bool = True,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Minimise the regularised objective without clipping or noise.

    Args:
        ds: Training set.
        spec: LossSpec or objective.
        tol: Gradient-norm certificate.
        max_iterations: Cap on gradient-descent iterations.
        warm_start: Start descent from an L-BFGS solution.
        x0: Starting point (zero when None).

    Returns:
        Point with ||grad F|| <= tol.

    Raises:
        ConvergenceError: The iteration cap is reached first.
    """
    objective = make_objective(spec, ds.num_classes)

    def value(w):
        return objective.full_objective(ds, w)

    def gradient(w):
        return objective.full_gradient(ds, w, clipped=False)

    x = objective.zeros(ds) if x0 is None else np.asarray(x0, dtype=float).copy()
    if warm_start:
        result = minimize(value, x, jac=gradient, method="L-BFGS-B",
                          options={"maxiter": 20_000, "gtol": tol, "ftol": 0.0})
        if np.all(np.isfinite(result.x)):
            x = result.x
        logger.debug("L-BFGS warm start: %s, |g|=%.3e", result.message, np.linalg.norm(gradient(x)))

    try:
        rate = 1.0 / objective.smoothness_bound(ds)
    except UnsupportedOperationError:
        rate = 1.0

    f, g = value(x), gradient(x)
    g_norm = float(np.linalg.norm(g))
    iterations = 0
    while g_norm > tol:
        if iterations >= max_iterations:
            raise ConvergenceError("nonprivate_optimum hit its iteration cap", iterations, g_norm)
        iterations += 1
        while True:
            candidate = x - rate * g
            f_candidate = value(candidate)
            if f_candidate <= f - 0.5 * rate * g_norm ** 2 + _F_FLOOR * max(1.0, abs(f)):
                g_candidate = gradient(candidate)
                # accept only steps that also shrink the gradient norm
                if np.linalg.norm(g_candidate) <= g_norm:
                    break
            rate *= 0.5
            if rate < 1e-30:
                raise ConvergenceError("backtracking line search collapsed", iterations, g_norm)
        x, f, g = candidate, f_candidate, g_candidate
        g_norm = float(np.linalg.norm(g))
        rate *= 2.0

    logger.info("Reference optimum on %s: F=%.10g, |g|=%.2e after %d descent steps", ds.name, f, g_norm, iterations)
    return x
