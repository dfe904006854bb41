"""
Data Models for the DP-ERM bench.

This module defines the Pydantic models shared by every package: datasets,
objective specifications, privacy quantities, optimiser configurations,
run traces, curvature traces and experiment configuration/results.

Classes:
    FeatureRow: One sparse feature vector in canonical form.
    Dataset: Immutable labelled sparse dataset (CSR storage).
    SplitSpec: Train/test split parameters.
    LossSpec: GLM objective specification (logistic | softmax | quadratic).
    HessianMatrix: Dense symmetric Hessian of a binary objective.
    PrivacyBudget, RdpCurve, MechanismSpec: Privacy accounting types.
    Schedule, Sampling, GdConfig, SgdConfig: Optimiser configuration.
    StepRecord, RunTrace: Per-run optimisation records.
    CurvatureSample, CurvatureTrace: Curvature samples along a path.
    ExperimentConfig, ResultRow: Benchmark configuration and output.
    ScalingConfig, ScalingResult, CurvatureConfig: Rate-check and curvature runs.
"""

import hashlib
import json
import math
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .exceptions import DimensionMismatchError, UnsupportedOperationError


# Dense mirrors (Hessians, Gram matrices) are only materialised up to this p.
DENSE_LIMIT = 2048


class FeatureRow(BaseModel):
    """
    Sparse feature vector of a single record.

    Attributes:
        indices: 0-based column indices, strictly increasing.
        values: Non-zero finite values matching ``indices``.
        dim: Feature dimension p.

    Example:
        >>> row = FeatureRow(indices=(0, 2), values=(0.5, 2.0), dim=3)
        >>> row.to_dense()
        array([0.5, 0. , 2. ])
    """

    model_config = ConfigDict(frozen=True)

    indices: Tuple[int, ...] = ()
    values: Tuple[float, ...] = ()
    dim: int = Field(gt=0)

    @model_validator(mode="after")
    def _check_canonical(self) -> "FeatureRow":
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must have equal length")
        previous = -1
        for index, value in zip(self.indices, self.values):
            if index <= previous:
                raise ValueError("indices must be strictly increasing")
            if index >= self.dim:
                raise ValueError(f"index {index} outside [0, {self.dim})")
            if value == 0.0:
                raise ValueError("canonical rows store no zero values")
            if not math.isfinite(value):
                raise ValueError("row values must be finite")
            previous = index
        return self

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[list(self.indices)] = self.values
        return dense


class Dataset(BaseModel):
    """
    Immutable labelled dataset with sparse features.

    Features are stored as a canonical ``scipy.sparse.csr_matrix`` (sorted
    indices, no explicit zeros). Labels are class ids in ``[0, num_classes)``;
    ``label_values`` remembers the raw label of each class id so the dataset
    can be written back to LIBSVM.

    Attributes:
        features: CSR matrix of shape (n, p).
        labels: Integer array of length n.
        num_classes: K >= 2.
        label_values: Raw label for each class id (may be empty).
        name: Dataset identifier used in reports.
        split: Split tag ("train", "test" or None).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: sparse.csr_matrix
    labels: np.ndarray
    num_classes: int = Field(ge=2)
    label_values: Tuple[float, ...] = ()
    name: str = "dataset"
    split: Optional[str] = None

    @field_validator("features", mode="before")
    @classmethod
    def _canonical_features(cls, value):
        matrix = sparse.csr_matrix(value, dtype=np.float64, copy=True)
        matrix.eliminate_zeros()
        matrix.sort_indices()
        if not np.all(np.isfinite(matrix.data)):
            raise ValueError("features must be finite")
        return matrix

    @field_validator("labels", mode="before")
    @classmethod
    def _integer_labels(cls, value):
        labels = np.array(value, dtype=np.int64).ravel()
        labels.setflags(write=False)
        return labels

    @model_validator(mode="after")
    def _check_shapes(self) -> "Dataset":
        n, p = self.features.shape
        if n == 0 or p == 0:
            raise ValueError("dataset needs n > 0 and p > 0")
        if self.labels.size != n:
            raise ValueError(f"{self.labels.size} labels for {n} rows")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if self.label_values and len(self.label_values) != self.num_classes:
            raise ValueError("label_values must name every class")
        return self

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def row(self, i: int) -> FeatureRow:
        start, stop = self.features.indptr[i], self.features.indptr[i + 1]
        return FeatureRow(
            indices=tuple(int(j) for j in self.features.indices[start:stop]),
            values=tuple(float(v) for v in self.features.data[start:stop]),
            dim=self.p,
        )

    @cached_property
    def row_norms(self) -> np.ndarray:
        """L2 norm of every row."""
        squared = np.asarray(self.features.multiply(self.features).sum(axis=1)).ravel()
        return np.sqrt(squared)

    def dense(self) -> np.ndarray:
        """Dense (n, p) mirror; only available for p <= DENSE_LIMIT."""
        if self.p > DENSE_LIMIT:
            raise UnsupportedOperationError(f"p={self.p} exceeds the dense limit {DENSE_LIMIT}")
        return self.features.toarray()

    def subset(self, indices, split: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            label_values=self.label_values,
            name=self.name,
            split=split,
        )

    def check_dim(self, p: int) -> None:
        if p != self.p:
            raise DimensionMismatchError(f"expected dimension {self.p}, got {p}")


class SplitSpec(BaseModel):
    """Deterministic train/test split parameters."""

    model_config = ConfigDict(extra="forbid")

    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    seed: int = 0


class LossKind(str, Enum):
    LOGISTIC = "logistic"
    SOFTMAX = "softmax"
    QUADRATIC = "quadratic"


class LossSpec(BaseModel):
    """
    Objective specification.

    ``lam`` is the L2 coefficient and ``clip_threshold`` the per-example
    clipping threshold C, which also plays the Lipschitz constant L in every
    noise calibration. ``quadratic_matrix`` is only read by the synthetic
    quadratic objective (identity when omitted).
    """

    model_config = ConfigDict(extra="forbid")

    kind: LossKind = LossKind.LOGISTIC
    lam: float = Field(1e-4, ge=0.0)
    clip_threshold: float = Field(1.0, gt=0.0)
    quadratic_matrix: Optional[List[List[float]]] = None

    def with_lam(self, lam: float) -> "LossSpec":
        return self.model_copy(update={"lam": lam})


class HessianMatrix(BaseModel):
    """Dense symmetric Hessian together with the regulariser it includes."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    lam: float = 0.0

    @model_validator(mode="after")
    def _check_symmetric(self) -> "HessianMatrix":
        h = self.values
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("Hessian must be square")
        scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
        if np.max(np.abs(h - h.T)) > 1e-12 * scale:
            raise ValueError("Hessian must be symmetric")
        return self

    @property
    def p(self) -> int:
        return self.values.shape[0]


class PrivacyBudget(BaseModel):
    """(epsilon, delta) target."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=1.0)


class RdpCurve(BaseModel):
    """Per-order Rényi-DP values of a (composed) mechanism."""

    model_config = ConfigDict(frozen=True)

    orders: Tuple[float, ...]
    values: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_curve(self) -> "RdpCurve":
        if not self.orders or len(self.orders) != len(self.values):
            raise ValueError("orders and values must be nonempty and of equal length")
        if any(a <= 1.0 for a in self.orders):
            raise ValueError("all orders must exceed 1")
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ValueError("orders must be ascending")
        if any(v < 0.0 or math.isnan(v) for v in self.values):
            raise ValueError("RDP values must be nonnegative")
        return self


class MechanismSpec(BaseModel):
    """Gaussian mechanism repeated T times with sampling ratio q."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    noise_multiplier: float = Field(gt=0.0)
    sampling_ratio: float = Field(1.0, gt=0.0, le=1.0)
    steps: int = Field(1, ge=1)


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    INVERSE_NU_T = "inverse_nu_t"
    INVERSE_SQRT = "inverse_sqrt"
    HALVE_AT_MIDPOINT = "halve_at_midpoint"


class Schedule(BaseModel):
    """
    Learning-rate schedule.

    constant: eta; inverse_nu_t: 1/(nu t); inverse_sqrt: D/(G sqrt t);
    halve_at_midpoint: eta for t <= floor(T/2), eta/2 afterwards.
    """

    model_config = ConfigDict(extra="forbid")

    kind: ScheduleKind = ScheduleKind.CONSTANT
    base_rate: float = Field(0.1, gt=0.0)
    nu: Optional[float] = Field(None, gt=0.0)
    radius: Optional[float] = Field(None, gt=0.0)
    gradient_bound: Optional[float] = Field(None, gt=0.0)
    total_steps: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "Schedule":
        if self.kind is ScheduleKind.INVERSE_NU_T and self.nu is None:
            raise ValueError("inverse_nu_t needs nu")
        if self.kind is ScheduleKind.INVERSE_SQRT and (self.radius is None or self.gradient_bound is None):
            raise ValueError("inverse_sqrt needs radius and gradient_bound")
        if self.kind is ScheduleKind.HALVE_AT_MIDPOINT and self.total_steps is None:
            raise ValueError("halve_at_midpoint needs total_steps")
        return self

    def rate(self, t: int) -> float:
        """Learning rate at step t (1-based)."""
        if t < 1:
            raise ValueError("steps are 1-based")
        if self.kind is ScheduleKind.CONSTANT:
            return self.base_rate
        if self.kind is ScheduleKind.INVERSE_NU_T:
            return 1.0 / (self.nu * t)
        if self.kind is ScheduleKind.INVERSE_SQRT:
            return self.radius / (self.gradient_bound * math.sqrt(t))
        # floor(T/2) for odd T
        return self.base_rate if t <= self.total_steps // 2 else self.base_rate / 2.0


class SamplingMode(str, Enum):
    SINGLE = "single"
    POISSON = "poisson"
    FIXED_RATIO = "fixed_ratio"


class Sampling(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: SamplingMode = SamplingMode.SINGLE
    ratio: Optional[float] = Field(None, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_ratio(self) -> "Sampling":
        if self.mode is not SamplingMode.SINGLE and self.ratio is None:
            raise ValueError(f"{self.mode.value} sampling needs a ratio")
        return self


class GdConfig(BaseModel):
    """
    DP-GD configuration.

    Attributes:
        steps: Number of iterations T.
        schedule: Learning-rate schedule.
        clip_threshold: Overrides the LossSpec's C when set.
        sigma: Per-step Gaussian std (0 disables noise).
        average_iterates: Return the mean of x_2..x_{T+1}.
        seed: Seed of the noise generator.
        snapshot_stride: Keep every k-th iterate (x_1 included) in the trace.
        record_objective: Evaluate F(x_t) for every step record.
    """

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(ge=1)
    schedule: Schedule = Field(default_factory=Schedule)
    clip_threshold: Optional[float] = Field(None, gt=0.0)
    sigma: float = Field(0.0, ge=0.0)
    average_iterates: bool = False
    seed: int = 0
    snapshot_stride: Optional[int] = Field(None, ge=1)
    record_objective: bool = True


class SgdConfig(BaseModel):
    """DP-SGD configuration; noise std on the summed lot gradient is noise_multiplier * C."""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(ge=1)
    schedule: Schedule = Field(default_factory=Schedule)
    clip_threshold: Optional[float] = Field(None, gt=0.0)
    noise_multiplier: float = Field(0.0, ge=0.0)
    sampling: Sampling = Field(default_factory=Sampling)
    projection_radius: Optional[float] = Field(None, gt=0.0)
    average_iterates: bool = False
    seed: int = 0
    snapshot_stride: Optional[int] = Field(None, ge=1)
    record_objective: bool = True


class StepRecord(BaseModel):
    step: int
    objective: Optional[float] = None
    grad_norm: float
    rate: float
    accuracy: Optional[float] = None


class RunTrace(BaseModel):
    """
    Record of one optimisation run.

    ``records`` holds exactly T entries. ``snapshots`` holds the iterates
    selected by ``snapshot_stride``; ``snapshot_steps[i]`` is the 1-based
    index t of ``snapshots[i]`` (x_1 is the zero start point).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    algorithm: str
    seed: int
    noise_std: float = 0.0
    records: List[StepRecord] = Field(default_factory=list)
    final_params: Optional[np.ndarray] = None
    averaged_params: Optional[np.ndarray] = None
    snapshots: List[np.ndarray] = Field(default_factory=list)
    snapshot_steps: List[int] = Field(default_factory=list)

    def to_jsonl(self) -> str:
        """One JSON object per step record."""
        return "".join(
            json.dumps({"algorithm": self.algorithm, "seed": self.seed, **record.model_dump()}) + "\n"
            for record in self.records
        )

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "noise_std": self.noise_std,
            "steps": len(self.records),
            "final_objective": last.objective if last else None,
            "final_params": None if self.final_params is None else self.final_params.tolist(),
            "averaged_params": None if self.averaged_params is None else self.averaged_params.tolist(),
        }


class CurvatureSample(BaseModel):
    step: int
    avg_curvature: float
    min_curvature: float
    nu_hat: Optional[float] = None
    nu_se: Optional[float] = None

    @model_validator(mode="after")
    def _check_order(self) -> "CurvatureSample":
        if self.avg_curvature < self.min_curvature - 1e-9:
            raise ValueError("average curvature below minimum curvature")
        return self


class CurvatureTrace(BaseModel):
    """Curvature samples along one training path for one regulariser value."""

    samples: List[CurvatureSample] = Field(default_factory=list)
    lam: float
    dataset: str = "dataset"
    stride: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_steps(self) -> "CurvatureTrace":
        steps = [s.step for s in self.samples]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("sample steps must be strictly increasing")
        return self

    def to_rows(self) -> List[dict]:
        return [
            {
                "step": s.step,
                "lambda": self.lam,
                "avg_curvature": s.avg_curvature,
                "min_curvature": s.min_curvature,
                "nu_hat": s.nu_hat,
                "nu_se": s.nu_se,
            }
            for s in self.samples
        ]


class Algorithm(str, Enum):
    DP_GD = "dp_gd"
    DP_SGD = "dp_sgd"
    OUT_GD = "out_gd"
    OUT_SGD = "out_sgd"
    NONPRIVATE = "nonprivate"


class DataFormat(str, Enum):
    LIBSVM = "libsvm"
    CSV = "csv"


DEFAULT_STEPS_GRID = [50, 200, 800]
DEFAULT_LEARNING_RATES = [0.1, 1.0, 5.0]
HIGH_DIM_LEARNING_RATES = [0.2, 2.0, 10.0]


class HashedConfig(BaseModel):
    """Config whose provenance hash is the sha256 of its sorted JSON dump."""

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ExperimentConfig(HashedConfig):
    """
    Configuration of one benchmark run, loaded from JSON.

    Unset optional fields resolve to the benchmark defaults: C = 1.0 (0.5 for
    high-dimensional sets), delta = 1/n^2 on the training split, learning
    rates {0.1, 1.0, 5.0} ({0.2, 2.0, 10.0} for high-dimensional sets).
    """

    model_config = ConfigDict(extra="forbid")

    dataset_path: Path
    dataset_format: DataFormat = DataFormat.LIBSVM
    dataset_name: Optional[str] = None
    csv_header: bool = False
    objective: LossKind = LossKind.LOGISTIC
    lam: float = Field(1e-4, ge=0.0)
    clip_threshold: Optional[float] = Field(None, gt=0.0)
    high_dimensional: bool = False
    normalize_rows: bool = False
    algorithms: List[Algorithm] = Field(default_factory=lambda: [Algorithm.DP_GD, Algorithm.DP_SGD])
    epsilons: List[float] = Field(default_factory=lambda: [0.1], min_length=1)
    delta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    steps_grid: List[int] = Field(default_factory=lambda: list(DEFAULT_STEPS_GRID), min_length=1)
    learning_rates: Optional[List[float]] = Field(None, min_length=1)
    sampling_ratio: float = Field(0.1, gt=0.0, le=1.0)
    repeats: int = Field(20, ge=1)
    seed: int = 0
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    output_dir: Path = Path("results")
    force_zero_noise: bool = False
    workers: int = Field(4, ge=1)
    write_traces: bool = True

    @field_validator("epsilons")
    @classmethod
    def _positive_epsilons(cls, value: List[float]) -> List[float]:
        if any(e <= 0 for e in value):
            raise ValueError("epsilon values must be positive")
        return value

    @field_validator("steps_grid")
    @classmethod
    def _positive_steps(cls, value: List[int]) -> List[int]:
        if any(t < 1 for t in value):
            raise ValueError("steps must be positive")
        return value

    @field_validator("learning_rates")
    @classmethod
    def _positive_rates(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(r <= 0 for r in value):
            raise ValueError("learning rates must be positive")
        return value

    @model_validator(mode="after")
    def _check_objective(self) -> "ExperimentConfig":
        if self.objective is LossKind.QUADRATIC:
            raise ValueError("experiments run logistic or softmax objectives")
        return self

    @property
    def resolved_clip(self) -> float:
        if self.clip_threshold is not None:
            return self.clip_threshold
        return 0.5 if self.high_dimensional else 1.0

    @property
    def resolved_learning_rates(self) -> List[float]:
        if self.learning_rates is not None:
            return list(self.learning_rates)
        return list(HIGH_DIM_LEARNING_RATES if self.high_dimensional else DEFAULT_LEARNING_RATES)

    @property
    def resolved_name(self) -> str:
        return self.dataset_name or self.dataset_path.stem

    def loss_spec(self) -> LossSpec:
        return LossSpec(kind=self.objective, lam=self.lam, clip_threshold=self.resolved_clip)


class ScalingConfig(HashedConfig):
    """
    Synthetic strongly convex logistic task used by the rate check.

    Records have unit L2 norm and labels drawn from a logistic model with
    parameter norm ``signal``. ``epsilon`` is used by the n-family and ``n``
    by the epsilon-family; delta defaults to 1/n^2.
    """

    model_config = ConfigDict(extra="forbid")

    n: int = Field(10_000, ge=10)
    p: int = Field(10, ge=1)
    lam: float = Field(0.1, gt=0.0)
    signal: float = Field(1.0, ge=0.0)
    clip_threshold: float = Field(1.0, gt=0.0)
    epsilon: float = Field(1.0, gt=0.0)
    delta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    repeats: int = Field(50, ge=1)
    seed: int = 0
    force_zero_noise: bool = False
    max_steps: int = Field(5000, ge=1)
    workers: int = Field(4, ge=1)
    output_dir: Path = Path("results")


class ScalingFamily(str, Enum):
    EPSILON = "epsilon"
    N = "n"


class ScalingResult(BaseModel):
    """Mean excess risk per point and the fitted log-log slope."""

    family: ScalingFamily
    points: List[float]
    steps: List[int]
    mean_risks: List[float]
    risk_ses: List[float]
    slope: float
    slope_se: float

    def to_rows(self) -> List[dict]:
        return [
            {"family": self.family.value, "point": x, "steps": t, "mean_excess_risk": r, "excess_risk_se": se}
            for x, t, r, se in zip(self.points, self.steps, self.mean_risks, self.risk_ses)
        ]


class CurvatureConfig(HashedConfig):
    """
    Curvature-trace run: one DP-GD path at ``train_lam`` sampled every
    ``stride`` steps and overlaid for each value in ``lambdas``.

    ``epsilon = None`` trains without noise.
    """

    model_config = ConfigDict(extra="forbid")

    dataset_path: Path
    dataset_format: DataFormat = DataFormat.LIBSVM
    dataset_name: Optional[str] = None
    csv_header: bool = False
    normalize_rows: bool = False
    train_lam: float = Field(1e-4, ge=0.0)
    lambdas: List[float] = Field(default_factory=lambda: [0.0, 1e-4, 1e-3], min_length=1)
    steps: int = Field(200, ge=1)
    learning_rate: float = Field(1.0, gt=0.0)
    clip_threshold: float = Field(1.0, gt=0.0)
    epsilon: Optional[float] = Field(0.1, gt=0.0)
    delta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    stride: int = Field(5, ge=1)
    nu_sigma: Optional[float] = Field(None, gt=0.0)
    nu_draws: int = Field(1000, ge=100)
    retrain: bool = False
    seed: int = 0
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    output_dir: Path = Path("results")

    @field_validator("lambdas")
    @classmethod
    def _nonnegative_lambdas(cls, value: List[float]) -> List[float]:
        if any(lam < 0 for lam in value):
            raise ValueError("regularisers must be nonnegative")
        return value

    @property
    def resolved_name(self) -> str:
        return self.dataset_name or self.dataset_path.stem


class ResultRow(BaseModel):
    """
    Selected grid point of one (dataset, algorithm, epsilon) cell.

    Infeasible rows keep the accuracy and risk fields empty.
    """

    dataset: str
    algorithm: Algorithm
    epsilon: float
    delta: float
    steps: Optional[int] = None
    learning_rate: Optional[float] = None
    noise_multiplier: Optional[float] = None
    sampling_ratio: float = 1.0
    accountant: str = "gaussian"
    mean_accuracy: Optional[float] = Field(None, ge=0.0, le=100.0)
    std_accuracy: Optional[float] = Field(None, ge=0.0)
    mean_excess_risk: Optional[float] = None
    excess_risk_se: Optional[float] = Field(None, ge=0.0)
    repeats: int = Field(ge=1)
    feasible: bool = True

    @field_validator("mean_excess_risk")
    @classmethod
    def _certified_risk(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < -1e-8:
            raise ValueError("excess risk below the certified optimum")
        return value
