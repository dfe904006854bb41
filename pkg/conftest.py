"""Shared fixtures for the DP-ERM bench tests."""

import os
from pathlib import Path

import numpy as np
import pytest
from scipy import sparse

from models.models import Dataset


TOY_LIBSVM = b"""+1 1:1.0 2:0.5
-1 1:-0.5 3:1.0
+1 2:1.0 3:0.25
-1 1:-1.0 2:-0.5
+1 1:0.75 3:-0.5
-1 2:-1.0 3:0.5
"""


@pytest.fixture
def toy_bytes() -> bytes:
    return TOY_LIBSVM


@pytest.fixture
def toy_binary() -> Dataset:
    """Six-record binary set with p = 3 and both classes present."""
    from data.dataset_loader import parse_libsvm
    return parse_libsvm(TOY_LIBSVM, name="toy")


def random_dataset(n: int = 40, p: int = 5, num_classes: int = 2, seed: int = 0,
                   unit_rows: bool = True, density: float = 1.0) -> Dataset:
    """Gaussian features (unit rows by default) with uniformly drawn labels; every class appears."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    if density < 1.0:
        x *= rng.random((n, p)) < density
    if unit_rows:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    labels = rng.integers(num_classes, size=n)
    labels[:num_classes] = np.arange(num_classes)
    return Dataset(features=sparse.csr_matrix(x), labels=labels, num_classes=num_classes,
                   name=f"random_n{n}_p{p}_k{num_classes}")


@pytest.fixture
def make_dataset():
    return random_dataset


def _dataset_path(env: str) -> Path:
    value = os.environ.get(env)
    if not value or not Path(value).exists():
        pytest.skip(f"{env} not set or missing")
    return Path(value)


@pytest.fixture
def adult_path() -> Path:
    return _dataset_path("DPBENCH_ADULT_PATH")


@pytest.fixture
def kdd_path() -> Path:
    return _dataset_path("DPBENCH_KDD_PATH")
