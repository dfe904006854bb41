"""
Base Objective Abstract Class.

This module defines the abstract base class for every empirical-risk
objective. Concrete objectives implement per-record losses and gradients
plus their vectorised counterparts; the base class builds the full
regularised objective, the (clipped) full gradient and clipping on top.

Classes:
    BaseObjective: Abstract base class with the common objective interface.
"""

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .exceptions import DimensionMismatchError, UnsupportedOperationError
from .models import Dataset, FeatureRow, HessianMatrix


def clip(g: np.ndarray, threshold: float) -> np.ndarray:
    """
    Rescale g onto the L2 ball of radius ``threshold``.

    Returns g unchanged when ||g|| <= threshold, g * threshold / ||g|| otherwise.
    """
    if threshold <= 0:
        raise ValueError("clipping threshold must be positive")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= threshold:
        return g.copy()
    return g * (threshold / norm)


def clip_factors(norms: np.ndarray, threshold: float) -> np.ndarray:
    """Per-example scale min(1, C/||g_i||), with 1 for zero gradients."""
    norms = np.asarray(norms, dtype=float)
    factors = np.ones_like(norms)
    over = norms > threshold
    factors[over] = threshold / norms[over]
    return factors


class BaseObjective(BaseModel, ABC):
    """
    Abstract base class for regularised empirical-risk objectives.

    F(w) = (1/n) sum_i f(w; d_i) + (lam/2) ||w||^2. The regulariser never
    enters per-example gradients, so clipping only touches data terms.

    Attributes:
        kind: Objective identifier ("logistic", "softmax", "quadratic").
        lam: L2 regularisation coefficient.
        clip_threshold: Per-example clipping threshold C.
        num_classes: Number of classes K the objective is bound to.

    Example:
        >>> objective = LogisticObjective(lam=1e-4, clip_threshold=1.0)
        >>> g = objective.full_gradient(ds, np.zeros(ds.p), clipped=True)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: str
    lam: float = Field(0.0, ge=0.0)
    clip_threshold: float = Field(1.0, gt=0.0)
    num_classes: int = Field(2, ge=2)

    # ---- dimensions -------------------------------------------------------
    @abstractmethod
    def parameter_size(self, p: int) -> int:
        """Length of the parameter vector for feature dimension p."""

    def check_compatible(self, ds: Dataset) -> None:
        if ds.num_classes != self.num_classes:
            raise DimensionMismatchError(
                f"{self.kind} objective bound to K={self.num_classes}, dataset has K={ds.num_classes}"
            )

    def check_parameters(self, ds: Dataset, w: np.ndarray) -> np.ndarray:
        self.check_compatible(ds)
        w = np.asarray(w, dtype=float).ravel()
        if w.size != self.parameter_size(ds.p):
            raise DimensionMismatchError(
                f"parameter length {w.size} does not match {self.kind} size {self.parameter_size(ds.p)}"
            )
        return w

    def zeros(self, ds: Dataset) -> np.ndarray:
        return np.zeros(self.parameter_size(ds.p))

    # ---- per-record operations -------------------------------------------
    @abstractmethod
    def per_example_loss(self, row: FeatureRow, label: int, w: np.ndarray) -> float:
        """Loss of one record; the regulariser is not included."""

    @abstractmethod
    def per_example_gradient(self, row: FeatureRow, label: int, w: np.ndarray) -> np.ndarray:
        """Gradient of ``per_example_loss`` with respect to w."""

    # ---- vectorised operations -------------------------------------------
    @abstractmethod
    def losses(self, ds: Dataset, w: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-example losses of the records selected by idx (all when None)."""

    @abstractmethod
    def gradient_sum(
        self,
        ds: Dataset,
        w: np.ndarray,
        idx: Optional[np.ndarray] = None,
        clip_threshold: Optional[float] = None,
    ) -> np.ndarray:
        """Sum of per-example gradients over idx, each clipped at clip_threshold when given."""

    @abstractmethod
    def predict(self, ds: Dataset, w: np.ndarray) -> np.ndarray:
        """Predicted class ids."""

    # ---- full objective --------------------------------------------------
    def full_objective(self, ds: Dataset, w: np.ndarray) -> float:
        w = self.check_parameters(ds, w)
        return float(np.mean(self.losses(ds, w)) + 0.5 * self.lam * np.dot(w, w))

    def full_gradient(
        self,
        ds: Dataset,
        w: np.ndarray,
        clipped: bool = True,
        clip_threshold: Optional[float] = None,
    ) -> np.ndarray:
        """
        Mean (clipped) per-example gradient plus lam * w.

        Args:
            ds: Dataset the objective is evaluated on.
            w: Parameter vector.
            clipped: Clip each per-example gradient before averaging.
            clip_threshold: Overrides ``self.clip_threshold``.
        """
        w = self.check_parameters(ds, w)
        threshold = (clip_threshold or self.clip_threshold) if clipped else None
        return self.gradient_sum(ds, w, clip_threshold=threshold) / ds.n + self.lam * w

    def full_gradients(self, ds: Dataset, points: np.ndarray) -> np.ndarray:
        """Unclipped full gradients at each row of ``points``."""
        return np.stack([self.full_gradient(ds, x, clipped=False) for x in np.atleast_2d(points)])

    def accuracy(self, ds: Dataset, w: np.ndarray) -> float:
        """Classification accuracy in percent."""
        w = self.check_parameters(ds, w)
        return 100.0 * float(np.mean(self.predict(ds, w) == ds.labels))

    # ---- curvature -------------------------------------------------------
    def hessian(self, ds: Dataset, w: np.ndarray) -> HessianMatrix:
        raise UnsupportedOperationError(f"{self.kind} objective has no dense Hessian")

    def smoothness_bound(self, ds: Dataset) -> float:
        raise UnsupportedOperationError(f"{self.kind} objective has no smoothness bound")
