"""
Shared fixtures for the sselab test-suite
"""

import numpy as np
import pytest

from sselab.numerics.noise import CovarianceSpec
from sselab.numerics.schemes import ProblemSpec
from sselab.numerics.spectral import GridSpec


@pytest.fixture
def grid() -> GridSpec:
    return GridSpec(num_modes=64)


@pytest.fixture
def small_grid() -> GridSpec:
    return GridSpec(num_modes=8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def additive_problem(small_grid) -> ProblemSpec:
    return ProblemSpec(grid=small_grid, covariance=CovarianceSpec.power_decay(2.0, small_grid))


@pytest.fixture
def potential_problem(small_grid) -> ProblemSpec:
    x = small_grid.nodes()
    return ProblemSpec(grid=small_grid, covariance=CovarianceSpec.power_decay(2.0, small_grid),
                       potential=tuple(1.0 / (1.0 + np.sin(x) ** 2)))


@pytest.fixture
def multiplicative_problem(small_grid) -> ProblemSpec:
    return ProblemSpec(grid=small_grid, covariance=CovarianceSpec.power_decay(5.1, small_grid),
                       noise_mode="multiplicative")


def random_coeffs(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
