"""
Synthetic Quadratic Objective.

Each record's feature row is a centre a_i and its loss is
(1/2)(x - a_i)^T A (x - a_i). The full objective is a quadratic with Hessian
A + lam I and minimiser (A + lam I)^{-1} A mean(a_i), which makes every
curvature and contraction quantity available in closed form. Labels are
ignored.
"""

from typing import Optional

import numpy as np
from pydantic import field_validator

from models.base_objective import BaseObjective, clip_factors
from models.exceptions import DimensionMismatchError
from models.models import Dataset, FeatureRow, HessianMatrix


class QuadraticObjective(BaseObjective):
    """
    Quadratic objective with a fixed symmetric PSD matrix A.

    Attributes:
        matrix: A; the identity of the dataset dimension when None.
    """

    kind: str = "quadratic"
    matrix: Optional[np.ndarray] = None

    @field_validator("matrix", mode="before")
    @classmethod
    def _symmetric_matrix(cls, value):
        if value is None:
            return None
        matrix = np.array(value, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("quadratic matrix must be square")
        if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12):
            raise ValueError("quadratic matrix must be symmetric")
        return matrix

    def check_compatible(self, ds: Dataset) -> None:
        self._matrix(ds.p)

    def _matrix(self, p: int) -> np.ndarray:
        if self.matrix is None:
            return np.eye(p)
        if self.matrix.shape[0] != p:
            raise DimensionMismatchError(f"quadratic matrix is {self.matrix.shape[0]}x{self.matrix.shape[0]}, p={p}")
        return self.matrix

    def parameter_size(self, p: int) -> int:
        return p

    def _offsets(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray]):
        centres = ds.features if idx is None else ds.features[idx]
        return w[None, :] - centres.toarray()

    def per_example_loss(self, row: FeatureRow, label: int, w: np.ndarray) -> float:
        d = np.asarray(w, dtype=float).ravel() - row.to_dense()
        return float(0.5 * d @ self._matrix(row.dim) @ d)

    def per_example_gradient(self, row: FeatureRow, label: int, w: np.ndarray) -> np.ndarray:
        d = np.asarray(w, dtype=float).ravel() - row.to_dense()
        return self._matrix(row.dim) @ d

    def losses(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
        offsets = self._offsets(ds, w, idx)
        return 0.5 * np.sum((offsets @ self._matrix(ds.p)) * offsets, axis=1)

    def gradient_sum(
        self,
        ds: Dataset,
        w: np.ndarray,
        idx: Optional[np.ndarray] = None,
        clip_threshold: Optional[float] = None,
    ) -> np.ndarray:
        grads = self._offsets(ds, w, idx) @ self._matrix(ds.p)
        if clip_threshold is not None:
            grads = grads * clip_factors(np.linalg.norm(grads, axis=1), clip_threshold)[:, None]
        return grads.sum(axis=0)

    def full_gradients(self, ds: Dataset, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        centre = np.asarray(ds.features.mean(axis=0)).ravel()
        return (points - centre) @ self._matrix(ds.p) + self.lam * points

    def predict(self, ds: Dataset, w: np.ndarray) -> np.ndarray:
        return np.zeros(ds.n, dtype=np.int64)

    def minimizer(self, ds: Dataset) -> np.ndarray:
        """Closed-form x_* = (A + lam I)^{-1} A mean(a_i)."""
        a = self._matrix(ds.p)
        centre = np.asarray(ds.features.mean(axis=0)).ravel()
        return np.linalg.solve(a + self.lam * np.eye(ds.p), a @ centre)

    def hessian(self, ds: Dataset, w: np.ndarray) -> HessianMatrix:
        self.check_parameters(ds, w)
        return HessianMatrix(values=self._matrix(ds.p) + self.lam * np.eye(ds.p), lam=self.lam)

    def smoothness_bound(self, ds: Dataset) -> float:
        return float(np.linalg.eigvalsh(self._matrix(ds.p))[-1]) + self.lam
