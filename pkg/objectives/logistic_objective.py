"""
Binary Logistic Regression Objective.

Labels {0, 1} are mapped to y in {-1, +1}; the per-record loss is
log(1 + exp(-y <w, a>)). Each per-example gradient is a scalar multiple of
its feature row, so clipping only needs the row norms and never materialises
the (n, p) gradient matrix.

Classes:
    LogisticObjective: L2-regularised logistic regression.
"""

import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.special import expit
from pydantic import field_validator

from models.base_objective import BaseObjective, clip_factors
from models.exceptions import DimensionMismatchError, UnsupportedOperationError
from models.models import DENSE_LIMIT, Dataset, FeatureRow, HessianMatrix


logger = logging.getLogger(__name__)


def _signs(labels: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(labels) == 1, 1.0, -1.0)


class LogisticObjective(BaseObjective):
    """
    L2-regularised binary logistic regression.

    Example:
        >>> objective = LogisticObjective(lam=0.0)
        >>> objective.full_objective(ds, np.zeros(ds.p))  # log 2
    """

    kind: str = "logistic"
    num_classes: int = 2

    @field_validator("num_classes")
    @classmethod
    def _binary_only(cls, value: int) -> int:
        if value != 2:
            raise ValueError("logistic objective requires K == 2")
        return value

    def parameter_size(self, p: int) -> int:
        return p

    def _row_vector(self, row: FeatureRow, w: np.ndarray):
        w = np.asarray(w, dtype=float).ravel()
        if w.size != row.dim:
            raise DimensionMismatchError(f"row dimension {row.dim} does not match parameter length {w.size}")
        return row.to_dense(), w

    def per_example_loss(self, row: FeatureRow, label: int, w: np.ndarray) -> float:
        a, w = self._row_vector(row, w)
        margin = _signs(label) * float(a @ w)
        return float(np.logaddexp(0.0, -margin))

    def per_example_gradient(self, row: FeatureRow, label: int, w: np.ndarray) -> np.ndarray:
        a, w = self._row_vector(row, w)
        y = float(_signs(label))
        return -y * float(expit(-y * float(a @ w))) * a

    def _margins(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray]):
        if idx is None:
            features, labels, norms = ds.features, ds.labels, ds.row_norms
        else:
            features, labels, norms = ds.features[idx], ds.labels[idx], ds.row_norms[idx]
        y = _signs(labels)
        return features, y, norms, y * (features @ w)

    def losses(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
        _, _, _, margins = self._margins(ds, w, idx)
        return np.logaddexp(0.0, -margins)

    def gradient_sum(
        self,
        ds: Dataset,
        w: np.ndarray,
        idx: Optional[np.ndarray] = None,
        clip_threshold: Optional[float] = None,
    ) -> np.ndarray:
        features, y, norms, margins = self._margins(ds, w, idx)
        coef = -y * expit(-margins)
        if clip_threshold is not None:
            coef = coef * clip_factors(np.abs(coef) * norms, clip_threshold)
        return np.asarray(features.T @ coef).ravel()

    def full_gradients(self, ds: Dataset, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        y = _signs(ds.labels)[:, None]
        coef = -y * expit(-y * (ds.features @ points.T))
        return np.asarray(ds.features.T @ coef).T / ds.n + self.lam * points

    def predict(self, ds: Dataset, w: np.ndarray) -> np.ndarray:
        return (ds.features @ w > 0).astype(np.int64)

    def hessian(self, ds: Dataset, w: np.ndarray) -> HessianMatrix:
        """(1/n) sum_i s_i (1 - s_i) a_i a_i^T + lam I with s_i = sigmoid(<w, a_i>)."""
        w = self.check_parameters(ds, w)
        if ds.p > DENSE_LIMIT:
            raise UnsupportedOperationError(f"p={ds.p} exceeds the dense limit {DENSE_LIMIT}")
        s = expit(ds.features @ w)
        weighted = sparse.diags(s * (1.0 - s)) @ ds.features
        h = np.asarray((ds.features.T @ weighted).todense()) / ds.n
        h = 0.5 * (h + h.T) + self.lam * np.eye(ds.p)
        return HessianMatrix(values=h, lam=self.lam)

    def smoothness_bound(self, ds: Dataset) -> float:
        """
        lambda_max((1/4n) sum_i a_i a_i^T) + lam.

        Above the dense limit the trace bound mean(||a_i||^2)/4 + lam is used.
        """
        self.check_compatible(ds)
        if ds.p > DENSE_LIMIT:
            return float(np.mean(ds.row_norms ** 2)) / 4.0 + self.lam
        gram = np.asarray((ds.features.T @ ds.features).todense()) / (4.0 * ds.n)
        beta = float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[-1]) + self.lam
        logger.debug("Smoothness bound for %s: %.6g", ds.name, beta)
        return beta
