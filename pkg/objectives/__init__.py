"""
Objectives package: concrete objectives and the functional operation surface.

Every operation accepts either a LossSpec (resolved through make_objective)
or an already constructed objective.

Functions:
    make_objective: Build the objective a LossSpec describes.
    per_example_loss, per_example_gradient, clip: Record-level operations.
    full_objective, full_gradient: Regularised dataset-level operations.
    hessian, smoothness_bound: Dense curvature of binary objectives.
"""

from typing import Union

import numpy as np

from models.base_objective import BaseObjective, clip
from models.exceptions import DimensionMismatchError
from models.models import Dataset, FeatureRow, HessianMatrix, LossKind, LossSpec
from objectives.logistic_objective import LogisticObjective
from objectives.quadratic_objective import QuadraticObjective
from objectives.softmax_objective import SoftmaxObjective

ObjectiveLike = Union[LossSpec, BaseObjective]

__all__ = [
    "LogisticObjective",
    "SoftmaxObjective",
    "QuadraticObjective",
    "make_objective",
    "per_example_loss",
    "per_example_gradient",
    "clip",
    "full_objective",
    "full_gradient",
    "hessian",
    "smoothness_bound",
]


def make_objective(spec: ObjectiveLike, num_classes: int = 2) -> BaseObjective:
    """
    Build the objective described by ``spec``.

    Raises:
        pydantic.ValidationError: logistic requested with K != 2.
    """
    if isinstance(spec, BaseObjective):
        return spec
    common = {"lam": spec.lam, "clip_threshold": spec.clip_threshold}
    if spec.kind is LossKind.LOGISTIC:
        return LogisticObjective(num_classes=num_classes, **common)
    if spec.kind is LossKind.SOFTMAX:
        return SoftmaxObjective(num_classes=num_classes, **common)
    return QuadraticObjective(matrix=spec.quadratic_matrix, num_classes=max(num_classes, 2), **common)


def _row_objective(spec: ObjectiveLike, row: FeatureRow, w) -> BaseObjective:
    if isinstance(spec, LossSpec) and spec.kind is LossKind.SOFTMAX:
        size = np.asarray(w).size
        if size % row.dim:
            raise DimensionMismatchError(f"parameter length {size} is not a multiple of p={row.dim}")
        return make_objective(spec, num_classes=size // row.dim)
    return make_objective(spec)


def per_example_loss(spec: ObjectiveLike, row: FeatureRow, label: int, w) -> float:
    return _row_objective(spec, row, w).per_example_loss(row, label, w)


def per_example_gradient(spec: ObjectiveLike, row: FeatureRow, label: int, w) -> np.ndarray:
    return _row_objective(spec, row, w).per_example_gradient(row, label, w)


def full_objective(spec: ObjectiveLike, ds: Dataset, w) -> float:
    return make_objective(spec, ds.num_classes).full_objective(ds, w)


def full_gradient(spec: ObjectiveLike, ds: Dataset, w, clipped: bool = True) -> np.ndarray:
    return make_objective(spec, ds.num_classes).full_gradient(ds, w, clipped=clipped)


def hessian(spec: ObjectiveLike, ds: Dataset, w) -> HessianMatrix:
    return make_objective(spec, ds.num_classes).hessian(ds, w)


def smoothness_bound(ds: Dataset, spec: ObjectiveLike) -> float:
    return make_objective(spec, ds.num_classes).smoothness_bound(ds)
