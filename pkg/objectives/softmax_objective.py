"""
Softmax (multinomial logistic) Regression Objective.

Parameters are the K x p weight matrix flattened row-major (class by
feature). The per-example gradient (p_i - e_{y_i}) a_i^T is clipped as one
flattened vector; its norm factorises as ||p_i - e_{y_i}|| * ||a_i||.
"""

from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from models.base_objective import BaseObjective, clip_factors
from models.exceptions import DimensionMismatchError
from models.models import Dataset, FeatureRow


class SoftmaxObjective(BaseObjective):
    """L2-regularised softmax regression over K >= 2 classes."""

    kind: str = "softmax"

    def parameter_size(self, p: int) -> int:
        return p * self.num_classes

    def _weights(self, w: np.ndarray, p: int) -> np.ndarray:
        w = np.asarray(w, dtype=float).ravel()
        if w.size != p * self.num_classes:
            raise DimensionMismatchError(
                f"parameter length {w.size} does not match K*p = {self.num_classes}*{p}"
            )
        return w.reshape(self.num_classes, p)

    def per_example_loss(self, row: FeatureRow, label: int, w: np.ndarray) -> float:
        logits = self._weights(w, row.dim) @ row.to_dense()
        return float(logsumexp(logits) - logits[label])

    def per_example_gradient(self, row: FeatureRow, label: int, w: np.ndarray) -> np.ndarray:
        a = row.to_dense()
        residual = softmax(self._weights(w, row.dim) @ a)
        residual[label] -= 1.0
        return np.outer(residual, a).ravel()

    def _logits(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray]):
        weights = self._weights(w, ds.p)
        if idx is None:
            features, labels, norms = ds.features, ds.labels, ds.row_norms
        else:
            features, labels, norms = ds.features[idx], ds.labels[idx], ds.row_norms[idx]
        return features, labels, norms, np.asarray(features @ weights.T)

    def losses(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
        _, labels, _, logits = self._logits(ds, w, idx)
        return logsumexp(logits, axis=1) - logits[np.arange(labels.size), labels]

    def gradient_sum(
        self,
        ds: Dataset,
        w: np.ndarray,
        idx: Optional[np.ndarray] = None,
        clip_threshold: Optional[float] = None,
    ) -> np.ndarray:
        features, labels, norms, logits = self._logits(ds, w, idx)
        residual = softmax(logits, axis=1)
        residual[np.arange(labels.size), labels] -= 1.0
        if clip_threshold is not None:
            factors = clip_factors(np.linalg.norm(residual, axis=1) * norms, clip_threshold)
            residual = residual * factors[:, None]
        return np.asarray(features.T @ residual).T.ravel()

    def predict(self, ds: Dataset, w: np.ndarray) -> np.ndarray:
        return np.argmax(np.asarray(ds.features @ self._weights(w, ds.p).T), axis=1)
