import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from models.exceptions import DimensionMismatchError, UnsupportedOperationError
from models.models import DENSE_LIMIT, Dataset, FeatureRow, LossKind, LossSpec
from objectives import (
    LogisticObjective,
    QuadraticObjective,
    SoftmaxObjective,
    clip,
    full_gradient,
    full_objective,
    hessian,
    make_objective,
    per_example_gradient,
    per_example_loss,
    smoothness_bound,
)


def feature_row(vector) -> FeatureRow:
    vector = np.asarray(vector, dtype=float)
    nz = np.flatnonzero(vector)
    return FeatureRow(indices=tuple(int(i) for i in nz), values=tuple(float(v) for v in vector[nz]), dim=vector.size)


def central_difference(f, w, h):
    grad = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        grad[j] = (f(w + e) - f(w - e)) / (2 * h)
    return grad


class TestLosses:
    def test_logistic_at_zero(self, toy_binary):
        row = toy_binary.row(0)
        assert per_example_loss(LossSpec(), row, 1, np.zeros(3)) == pytest.approx(math.log(2), rel=1e-15)
        assert full_objective(LossSpec(lam=0.3), toy_binary, np.zeros(3)) == pytest.approx(math.log(2), rel=1e-15)

    def test_softmax_at_zero(self, make_dataset):
        ds = make_dataset(n=30, p=4, num_classes=3)
        objective = SoftmaxObjective(num_classes=3)
        assert objective.full_objective(ds, np.zeros(12)) == pytest.approx(math.log(3), rel=1e-15)

    def test_large_margin(self):
        row = FeatureRow(indices=(0,), values=(1.0,), dim=2)
        value = per_example_loss(LossSpec(), row, 1, np.array([10.0, 0.0]))
        assert value == pytest.approx(math.log1p(math.exp(-10.0)), rel=1e-12)
        assert value == pytest.approx(4.54e-5, rel=1e-3)

    def test_regulariser_is_added_once(self, toy_binary):
        w = np.array([0.2, -0.1, 0.4])
        plain = full_objective(LossSpec(lam=0.0), toy_binary, w)
        assert full_objective(LossSpec(lam=0.5), toy_binary, w) == pytest.approx(plain + 0.25 * w @ w)

    def test_dimension_mismatch(self, toy_binary):
        with pytest.raises(DimensionMismatchError):
            full_objective(LossSpec(), toy_binary, np.zeros(4))
        with pytest.raises(DimensionMismatchError):
            per_example_loss(LossSpec(), toy_binary.row(0), 1, np.zeros(2))

    def test_logistic_needs_two_classes(self):
        with pytest.raises(ValueError):
            make_objective(LossSpec(kind=LossKind.LOGISTIC), num_classes=3)


class TestPerExampleGradient:
    def test_logistic_at_zero(self):
        row = FeatureRow(indices=(0,), values=(1.0,), dim=2)
        assert np.allclose(per_example_gradient(LossSpec(), row, 1, np.zeros(2)), [-0.5, 0.0])

    @pytest.mark.parametrize("kind,classes", [(LossKind.LOGISTIC, 2), (LossKind.SOFTMAX, 2), (LossKind.SOFTMAX, 4)])
    def test_finite_differences(self, kind, classes):
        rng = np.random.default_rng(11)
        spec = LossSpec(kind=kind)
        for _ in range(100):
            p = int(rng.integers(1, 21))
            row = feature_row(rng.standard_normal(p) * (rng.random(p) < 0.7) + np.eye(p)[0])
            label = int(rng.integers(classes))
            size = p if kind is LossKind.LOGISTIC else p * classes
            w = rng.standard_normal(size)
            analytic = per_example_gradient(spec, row, label, w)
            numeric = central_difference(lambda v: per_example_loss(spec, row, label, v), w, 1e-5)
            assert np.max(np.abs(analytic - numeric)) <= 1e-6 * (1.0 + np.linalg.norm(analytic))

    def test_softmax_two_class_matches_logistic(self):
        rng = np.random.default_rng(5)
        row = feature_row(rng.standard_normal(4))
        rows = rng.standard_normal((2, 4))
        w = rows[1] - rows[0]
        for label in (0, 1):
            softmax_loss = per_example_loss(LossSpec(kind=LossKind.SOFTMAX), row, label, rows.ravel())
            assert softmax_loss == pytest.approx(per_example_loss(LossSpec(), row, label, w), rel=1e-12)
            g = per_example_gradient(LossSpec(kind=LossKind.SOFTMAX), row, label, rows.ravel()).reshape(2, 4)
            # difference-of-rows parameterisation: d/dw = d/dw1 = -d/dw0
            assert np.allclose(g[1], per_example_gradient(LossSpec(), row, label, w), atol=1e-14)
            assert np.allclose(g[0], -g[1], atol=1e-14)


class TestClip:
    def test_examples(self):
        assert np.allclose(clip(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
        assert np.array_equal(clip(np.array([0.3, 0.4]), 1.0), [0.3, 0.4])
        assert np.array_equal(clip(np.zeros(3), 1.0), np.zeros(3))
        with pytest.raises(ValueError):
            clip(np.ones(2), 0.0)

    @settings(deadline=None)
    @given(
        arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6, allow_nan=False)),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_norm_and_direction(self, g, threshold):
        clipped = clip(g, threshold)
        norm = np.linalg.norm(g)
        assert np.linalg.norm(clipped) <= threshold * (1 + 1e-12)
        if norm <= threshold:
            assert np.array_equal(clipped, g)
        else:
            assert np.allclose(clipped * norm, g * threshold, rtol=1e-12, atol=1e-9)


class TestFullGradient:
    @pytest.mark.parametrize("kind,classes", [(LossKind.LOGISTIC, 2), (LossKind.SOFTMAX, 3), (LossKind.QUADRATIC, 2)])
    def test_loop_oracle(self, make_dataset, kind, classes):
        ds = make_dataset(n=25, p=6, num_classes=classes, unit_rows=False, seed=2)
        spec = LossSpec(kind=kind, lam=0.05, clip_threshold=0.5)
        objective = make_objective(spec, classes)
        w = np.random.default_rng(3).standard_normal(objective.parameter_size(ds.p))
        loop = np.mean([clip(objective.per_example_gradient(ds.row(i), ds.labels[i], w), 0.5)
                        for i in range(ds.n)], axis=0) + 0.05 * w
        assert np.allclose(full_gradient(spec, ds, w), loop, rtol=1e-12, atol=1e-14)

    def test_two_point_hand_sum(self):
        ds = Dataset(features=[[1.0, 0.0], [0.0, 2.0]], labels=[1, 0], num_classes=2)
        # margins are 0 at w = 0: gradients -0.5*a_1 and +0.5*a_2, the second clipped to norm 1 at C = 1
        assert np.allclose(full_gradient(LossSpec(lam=0.0), ds, np.zeros(2)), [-0.25, 0.5])
        assert np.allclose(full_gradient(LossSpec(lam=0.0), ds, np.zeros(2), clipped=False), [-0.25, 0.5])
        assert np.allclose(full_gradient(LossSpec(lam=0.0, clip_threshold=0.25), ds, np.zeros(2)), [-0.125, 0.125])

    @pytest.mark.parametrize("kind,classes", [(LossKind.LOGISTIC, 2), (LossKind.SOFTMAX, 3)])
    def test_unclipped_matches_finite_differences(self, make_dataset, kind, classes):
        ds = make_dataset(n=20, p=5, num_classes=classes, unit_rows=False, seed=4)
        objective = make_objective(LossSpec(kind=kind, lam=0.1), classes)
        w = np.random.default_rng(8).standard_normal(objective.parameter_size(ds.p))
        analytic = objective.full_gradient(ds, w, clipped=False)
        numeric = central_difference(lambda v: objective.full_objective(ds, v), w, 1e-5)
        assert np.max(np.abs(analytic - numeric)) <= 1e-6 * (1.0 + np.linalg.norm(analytic))

    def test_full_gradients_batch(self, make_dataset):
        ds = make_dataset(n=15, p=3, seed=6)
        objective = LogisticObjective(lam=0.01)
        points = np.random.default_rng(0).standard_normal((4, 3))
        expected = np.stack([objective.full_gradient(ds, x, clipped=False) for x in points])
        assert np.allclose(objective.full_gradients(ds, points), expected, rtol=1e-12, atol=1e-15)


class TestHessian:
    def test_logistic_at_zero(self, make_dataset):
        ds = make_dataset(n=30, p=4, unit_rows=False, seed=9)
        a = ds.features.toarray()
        h = hessian(LossSpec(lam=0.2), ds, np.zeros(4))
        assert h.lam == 0.2
        assert np.allclose(h.values, 0.25 * a.T @ a / ds.n + 0.2 * np.eye(4), rtol=1e-12, atol=1e-15)

    def test_finite_differences(self, make_dataset):
        ds = make_dataset(n=30, p=4, unit_rows=False, seed=10)
        objective = LogisticObjective(lam=0.01)
        w = np.random.default_rng(1).standard_normal(4)
        numeric = np.stack([
            central_difference(lambda v: objective.full_gradient(ds, v, clipped=False)[j], w, 1e-5) for j in range(4)
        ])
        assert np.max(np.abs(objective.hessian(ds, w).values - numeric)) <= 1e-5

    def test_softmax_has_no_dense_hessian(self, make_dataset):
        ds = make_dataset(num_classes=3)
        with pytest.raises(UnsupportedOperationError):
            SoftmaxObjective(num_classes=3).hessian(ds, np.zeros(3 * ds.p))

    def test_quadratic(self, make_dataset):
        ds = make_dataset(n=10, p=2)
        objective = QuadraticObjective(matrix=[[2.0, 1.0], [1.0, 3.0]], lam=0.5)
        h = objective.hessian(ds, np.zeros(2))
        assert np.allclose(h.values, [[2.5, 1.0], [1.0, 3.5]])
        assert np.allclose(objective.full_gradient(ds, objective.minimizer(ds), clipped=False), 0.0, atol=1e-12)


class TestSmoothnessBound:
    def test_single_direction(self):
        ds = Dataset(features=[[1.0, 0.0], [1.0, 0.0]], labels=[0, 1], num_classes=2)
        assert smoothness_bound(ds, LossSpec(lam=0.0)) == pytest.approx(0.25)
        assert smoothness_bound(ds, LossSpec(lam=0.5)) == pytest.approx(0.75)

    def test_dominates_hessian(self, make_dataset):
        ds = make_dataset(n=40, p=6, unit_rows=False, seed=12)
        objective = LogisticObjective(lam=1e-3)
        beta = objective.smoothness_bound(ds)
        rng = np.random.default_rng(2)
        for _ in range(10):
            top = np.linalg.eigvalsh(objective.hessian(ds, rng.standard_normal(6)).values)[-1]
            assert top <= beta * (1 + 1e-12)

    def test_trace_bound_above_dense_limit(self, make_dataset):
        ds = make_dataset(n=5, p=DENSE_LIMIT + 1, unit_rows=False, density=0.01, seed=13)
        expected = float(np.mean(ds.row_norms ** 2)) / 4.0 + 0.1
        assert LogisticObjective(lam=0.1).smoothness_bound(ds) == pytest.approx(expected, rel=1e-12)


class TestConvexity:
    @pytest.mark.parametrize("kind,classes", [(LossKind.LOGISTIC, 2), (LossKind.SOFTMAX, 3)])
    def test_midpoint(self, make_dataset, kind, classes):
        ds = make_dataset(n=20, p=4, num_classes=classes, seed=13)
        objective = make_objective(LossSpec(kind=kind, lam=0.0), classes)
        rng = np.random.default_rng(4)
        size = objective.parameter_size(ds.p)
        for _ in range(50):
            u, v = rng.standard_normal(size) * 3, rng.standard_normal(size) * 3
            mid = objective.full_objective(ds, (u + v) / 2)
            assert mid <= (objective.full_objective(ds, u) + objective.full_objective(ds, v)) / 2 + 1e-12
