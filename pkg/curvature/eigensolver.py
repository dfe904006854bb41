"""
Smallest-eigenvalue solvers for dense symmetric matrices.

Functions:
    jacobi_min_eigenvalue: Cyclic Jacobi rotations (all eigenvalues, p <= JACOBI_LIMIT).
    inverse_power_min_eigenvalue: Shifted inverse power iteration on a Cholesky factor.
    min_eigenvalue: Dispatch on the matrix size.
"""

import logging
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from models.exceptions import EigensolverError


logger = logging.getLogger(__name__)

JACOBI_LIMIT = 256
DEFAULT_TOL = 1e-8
MAX_SWEEPS = 100
MAX_POWER_ITERATIONS = 10_000
NEGLIGIBLE = 1e-18


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def jacobi_eigenvalues(matrix: np.ndarray, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.

    Every eigenvalue is within the final off-diagonal Frobenius norm of a
    diagonal entry, so sweeping stops once that norm is below ``tol / 100``
    (or at float resolution for badly scaled input).

    Raises:
        EigensolverError: The off-diagonal mass is still above tolerance after ``max_sweeps``.
    """
    a = np.array(matrix, dtype=float, copy=True)
    p = a.shape[0]
    target = max(tol * 1e-2, 1e-15 * float(np.linalg.norm(a)))
    for sweep in range(max_sweeps):
        off = _off_norm(a)
        if off <= target:
            logger.debug("Jacobi converged after %d sweeps (off=%.2e)", sweep, off)
            return np.sort(np.diag(a))
        for i in range(p - 1):
            for j in range(i + 1, p):
                apq = a[i, j]
                if abs(apq) <= NEGLIGIBLE * (abs(a[i, i]) + abs(a[j, j])):
                    # negligible against both pivots
                    a[i, j] = a[j, i] = 0.0
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_i, col_j = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * col_i - s * col_j
                a[:, j] = s * col_i + c * col_j
                row_i, row_j = a[i, :].copy(), a[j, :].copy()
                a[i, :] = c * row_i - s * row_j
                a[j, :] = s * row_i + c * row_j
                a[i, j] = a[j, i] = 0.0
    raise EigensolverError(f"Jacobi did not converge in {max_sweeps} sweeps (off={_off_norm(a):.3e})")


def jacobi_min_eigenvalue(matrix: np.ndarray, tol: float = DEFAULT_TOL, max_sweeps: int = MAX_SWEEPS) -> float:
    return float(jacobi_eigenvalues(matrix, tol, max_sweeps)[0])


def _gershgorin_floor(a: np.ndarray) -> float:
    radii = np.sum(np.abs(a), axis=1) - np.abs(np.diag(a))
    return float(np.min(np.diag(a) - radii))


def inverse_power_min_eigenvalue(
    matrix: np.ndarray,
    shift: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_POWER_ITERATIONS,
    seed: int = 0,
) -> float:
    """
    Smallest eigenvalue by inverse iteration on (H - sI).

    The shift must lie below the spectrum so that H - sI is positive definite;
    ``shift`` is a hint (the regulariser for GLM Hessians, whose spectrum
    starts at lam) and is nudged just below it. If the Cholesky factorisation
    still fails the Gershgorin lower bound is used instead.

    Raises:
        EigensolverError: The residual ||Hv - mu v|| stays above ``tol``.
    """
    a = np.asarray(matrix, dtype=float)
    p = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a))))
    floor = _gershgorin_floor(a) - 1e-6 * scale
    s = floor if shift is None else shift - 1e-6 * scale
    try:
        factor = cho_factor(a - s * np.eye(p))
    except LinAlgError:
        logger.debug("Shift %.4g is inside the spectrum; falling back to Gershgorin bound", s)
        s = floor
        factor = cho_factor(a - s * np.eye(p))

    v = np.random.default_rng(seed).standard_normal(p)
    v /= np.linalg.norm(v)
    mu = float(v @ a @ v)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        v = cho_solve(factor, v)
        v /= np.linalg.norm(v)
        hv = a @ v
        mu = float(v @ hv)
        residual = float(np.linalg.norm(hv - mu * v))
        if residual <= tol:
            logger.debug("Inverse iteration converged after %d steps (mu=%.6g)", iteration, mu)
            return mu
    raise EigensolverError(f"inverse iteration did not converge (residual={residual:.3e}, mu={mu:.6g})")


def min_eigenvalue(matrix: np.ndarray, shift: Optional[float] = None, tol: float = DEFAULT_TOL) -> float:
    """Jacobi for p <= JACOBI_LIMIT, shifted inverse iteration beyond."""
    if matrix.shape[0] <= JACOBI_LIMIT:
        return jacobi_min_eigenvalue(matrix, tol)
    return inverse_power_min_eigenvalue(matrix, shift=shift, tol=tol)
