import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from sselab.core.exceptions import GridMismatchError
from sselab.numerics.spectral import (
    SQRT_2PI,
    GridSpec,
    SpectralState,
    apply_semigroup,
    coeffs_to_physical,
    dealias,
    from_physical,
    gradient,
    l2_norm_squared,
    laplacian,
    mode_index,
    physical_to_coeffs,
    pointwise_multiply,
    quadrature,
    to_physical,
)
from tests.conftest import random_coeffs


class TestGridSpec:
    def test_modes_are_signed_and_ordered(self, small_grid):
        assert small_grid.modes().tolist() == [-4, -3, -2, -1, 0, 1, 2, 3]

    def test_nodes(self, small_grid):
        assert_allclose(small_grid.nodes(), 2 * math.pi * np.arange(8) / 8)
        assert small_grid.dx == pytest.approx(math.pi / 4)

    @pytest.mark.parametrize("m", [0, 3, 7])
    def test_rejects_odd_or_tiny_mode_counts(self, m):
        with pytest.raises(ValidationError):
            GridSpec(num_modes=m)

    def test_mode_index_out_of_range(self, small_grid):
        assert mode_index(small_grid, -4) == 0
        with pytest.raises(GridMismatchError):
            mode_index(small_grid, 4)


class TestTransforms:
    def test_zero_coefficients_give_zero_samples(self, grid):
        assert np.all(to_physical(SpectralState.zeros(grid)) == 0)

    def test_constant_mode_is_one(self, grid):
        state = SpectralState.single_mode(grid, 0, SQRT_2PI)
        assert_allclose(to_physical(state), np.ones(64), atol=1e-14)

    def test_bump_round_trip(self, grid):
        x = grid.nodes()
        samples = 2.0 / (2.0 - np.cos(x))
        back = to_physical(from_physical(samples, grid))
        assert_allclose(back.real, samples, rtol=1e-12)
        assert np.max(np.abs(back.imag)) < 1e-12

    def test_constant_samples(self, grid):
        coeffs = from_physical(np.ones(64), grid).coeffs
        expected = np.zeros(64, dtype=complex)
        expected[mode_index(grid, 0)] = SQRT_2PI
        assert_allclose(coeffs, expected, atol=1e-13)

    def test_plane_wave_samples(self, grid):
        coeffs = from_physical(np.exp(1j * grid.nodes()), grid).coeffs
        assert coeffs[mode_index(grid, 1)] == pytest.approx(SQRT_2PI, abs=1e-13)
        coeffs[mode_index(grid, 1)] = 0
        assert np.max(np.abs(coeffs)) < 1e-13

    def test_parseval(self, grid, rng):
        samples = random_coeffs(rng, 64)
        coeffs = physical_to_coeffs(samples)
        physical_norm = quadrature(np.abs(samples) ** 2)
        assert l2_norm_squared(coeffs) == pytest.approx(physical_norm, rel=1e-12)

    def test_batched_axes(self, grid, rng):
        coeffs = random_coeffs(rng, (3, 5, 64))
        assert_allclose(physical_to_coeffs(coeffs_to_physical(coeffs)), coeffs, atol=1e-12)

    def test_wrong_length_rejected(self, grid):
        with pytest.raises(GridMismatchError):
            from_physical(np.ones(63), grid)
        with pytest.raises(GridMismatchError):
            SpectralState(np.zeros(10), grid)


class TestSemigroup:
    def test_zero_time_is_identity(self, grid, rng):
        state = SpectralState(random_coeffs(rng, 64), grid)
        assert np.array_equal(apply_semigroup(state, 0.0).coeffs, state.coeffs)

    def test_phase_on_single_mode(self, grid):
        state = SpectralState.single_mode(grid, 2)
        out = apply_semigroup(state, math.pi / 4).coeffs
        assert out[mode_index(grid, 2)] == pytest.approx(-1.0, abs=1e-15)

    def test_isometry_and_group_property(self, grid, rng):
        state = SpectralState(random_coeffs(rng, 64), grid)
        forward = apply_semigroup(state, 0.37)
        assert l2_norm_squared(forward.coeffs) == pytest.approx(l2_norm_squared(state.coeffs), rel=1e-14)
        assert_allclose(apply_semigroup(forward, -0.37).coeffs, state.coeffs, atol=1e-13)

    def test_rejects_non_finite_time(self, grid):
        with pytest.raises(ValueError):
            apply_semigroup(SpectralState.zeros(grid), math.inf)


class TestDerivatives:
    def test_laplacian_of_first_mode(self, grid):
        out = laplacian(SpectralState.single_mode(grid, 1)).coeffs
        assert out[mode_index(grid, 1)] == -1

    def test_constant_mode_is_annihilated(self, grid):
        state = SpectralState.single_mode(grid, 0)
        assert np.all(laplacian(state).coeffs == 0)
        assert np.all(gradient(state).coeffs == 0)

    def test_gradient_matches_physical_derivative(self, grid):
        x = grid.nodes()
        state = from_physical(np.sin(3 * x), grid)
        assert_allclose(to_physical(gradient(state)).real, 3 * np.cos(3 * x), atol=1e-12)


class TestProducts:
    def test_unit_field_is_identity(self, grid, rng):
        one = from_physical(np.ones(64), grid)
        b = SpectralState(random_coeffs(rng, 64), grid)
        assert_allclose(pointwise_multiply(one, b).coeffs, b.coeffs, atol=1e-12)

    def test_first_mode_squared(self, grid):
        e1 = SpectralState.single_mode(grid, 1)
        product = pointwise_multiply(e1, e1).coeffs
        expected = np.zeros(64, dtype=complex)
        expected[mode_index(grid, 2)] = 1.0 / SQRT_2PI
        assert_allclose(product, expected, atol=1e-14)

    def test_zero_field(self, grid, rng):
        b = SpectralState(random_coeffs(rng, 64), grid)
        assert np.all(pointwise_multiply(SpectralState.zeros(grid), b).coeffs == 0)

    def test_grid_mismatch(self, grid, small_grid):
        with pytest.raises(GridMismatchError):
            pointwise_multiply(SpectralState.zeros(grid), SpectralState.zeros(small_grid))

    def test_dealiased_product_drops_high_modes(self, grid):
        e25 = SpectralState.single_mode(grid, 25)
        assert np.all(dealias(e25).coeffs == 0)
        assert np.all(pointwise_multiply(e25, e25, dealias_product=True).coeffs == 0)
