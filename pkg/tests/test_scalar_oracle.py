import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from sselab.core.exceptions import UnknownTagError
from sselab.numerics.noise import CovarianceSpec, child_rng, sample_increment_array
from sselab.numerics.scalar_oracle import (
    SCALAR_SCHEMES,
    ScalarProblem,
    bem_upper_bound,
    em_growth_lower_bound,
    exact_second_moment,
    mc_second_moment,
    moment_recursion,
    moment_table,
    simulate_path,
)
from sselab.numerics.schemes import ProblemSpec, Stepper
from sselab.numerics.spectral import GridSpec, mode_index

UNIT = ScalarProblem(a=1.0, b=1.0, m0=0.0, k=0.1)


class TestExactMoment:
    def test_noise_free_is_constant(self):
        p = ScalarProblem(a=3.0, b=0.0, m0=1.5, k=0.1)
        assert exact_second_moment(p, 7.0) == 1.5

    @pytest.mark.parametrize("m0,b,t,expected", [(0.0, 1.0, 2.0, 2.0), (1.0, 2.0, 0.5, 3.0)])
    def test_linear_growth(self, m0, b, t, expected):
        assert exact_second_moment(ScalarProblem(a=1.0, b=b, m0=m0, k=0.1), t) == expected

    def test_negative_time(self):
        with pytest.raises(ValueError):
            exact_second_moment(UNIT, -1.0)

    def test_problem_validation(self):
        with pytest.raises(ValidationError):
            ScalarProblem(a=1.0, b=1.0, k=0.0)
        with pytest.raises(ValidationError):
            ScalarProblem(a=1.0, b=-1.0, k=0.1)


class TestMomentRecursion:
    def test_explicit_euler_first_steps(self):
        m = moment_recursion("EM", UNIT, 2)
        assert m[0] == 0.0
        assert m[1] == pytest.approx(0.1, rel=1e-15)
        assert m[2] == pytest.approx(0.201, rel=1e-15)

    def test_midpoint_closed_form(self):
        m = moment_recursion("MP", UNIT, 10)
        assert abs(m[10] - 0.9950248756218906) <= 1e-12
        t = UNIT.k * np.arange(11)
        assert_allclose(m, t / (1 + 0.5 * UNIT.a ** 2 * UNIT.k ** 2), rtol=0, atol=1e-12)

    def test_midpoint_closed_form_long_run(self):
        p = ScalarProblem(a=-3.0, b=0.7, m0=0.25, k=0.05)
        n = 10_000
        m = moment_recursion("MP", p, n)
        t = p.k * np.arange(n + 1)
        closed = p.m0 + p.b ** 2 * t / (1 + 0.5 * p.a ** 2 * p.k ** 2)
        assert np.max(np.abs(m - closed) / np.maximum(closed, 1.0)) <= 1e-12

    def test_exact_midpoint_factor(self):
        m = moment_recursion("MP", UNIT, 10, exact_midpoint=True)
        assert m[10] == pytest.approx(1 / 1.0025, rel=1e-12)

    def test_exponential_integrator_is_exact(self):
        p = ScalarProblem(a=7.0, b=1.3, m0=0.4, k=0.3)
        m = moment_recursion("SEXP", p, 500)
        exact = [exact_second_moment(p, n * p.k) for n in range(501)]
        assert_allclose(m, exact, rtol=1e-14)

    @pytest.mark.parametrize("a,b,k", [(1.0, 1.0, 0.1), (-4.0, 0.5, 0.05), (10.0, 2.0, 0.01)])
    def test_backward_euler_bound(self, a, b, k):
        p = ScalarProblem(a=a, b=b, m0=0.3, k=k)
        m = moment_recursion("BEM", p, 10_000)
        assert np.all(m <= bem_upper_bound(p) * (1 + 1e-14))

    @pytest.mark.parametrize("a,k", [(1.0, 0.1), (-2.0, 0.05), (0.5, 0.2)])
    def test_explicit_euler_growth(self, a, k):
        p = ScalarProblem(a=a, b=0.0, m0=1.0, k=k)
        m = moment_recursion("EM", p, 10_000)
        n = np.arange(10_001)
        with np.errstate(over="ignore"):
            geometric = (1 + a * a * k * k) ** n.astype(float)
        assert np.all(m >= geometric * (1 - 1e-12))
        bounds = [em_growth_lower_bound(p, int(j)) for j in (0, 10, 100, 1000)]
        assert np.all(m[[0, 10, 100, 1000]] >= np.array(bounds) * (1 - 1e-12))

    def test_explicit_euler_bound_at_large_step(self):
        p = ScalarProblem(a=-16.0, b=1.0, m0=1.0, k=0.1)
        m = moment_recursion("EM", p, 10)
        assert m[10] >= em_growth_lower_bound(p, 10)
        noise_free = moment_recursion("EM", ScalarProblem(a=-16.0, b=0.0, m0=1.0, k=0.1), 10)
        assert em_growth_lower_bound(p, 10) == pytest.approx(noise_free[10], rel=1e-13)

    def test_explicit_euler_bound_overflow(self):
        p = ScalarProblem(a=100.0, b=0.0, m0=1.0, k=1.0)
        assert em_growth_lower_bound(p, 1_000) == math.inf
        assert em_growth_lower_bound(ScalarProblem(a=100.0, b=1.0, m0=0.0, k=1.0), 1_000) == 0.0

    def test_bem_bound_without_drift_term(self):
        assert bem_upper_bound(ScalarProblem(a=0.0, b=1.0, k=0.1)) == math.inf

    def test_unknown_scheme(self):
        with pytest.raises(UnknownTagError):
            moment_recursion("RK4", UNIT, 3)

    def test_negative_steps(self):
        with pytest.raises(ValueError):
            moment_recursion("EM", UNIT, -1)


class TestMonteCarloMoment:
    def test_noise_free_zero_state(self):
        estimate, se = mc_second_moment("MP", ScalarProblem(a=1.0, b=0.0, m0=0.0, k=0.1), 10, 100,
                                        np.random.default_rng(0))
        assert (estimate, se) == (0.0, 0.0)

    def test_midpoint_against_recursion(self):
        estimate, se = mc_second_moment("MP", UNIT, 10, 100_000, np.random.default_rng(2013))
        assert abs(estimate - 0.9950248756218906) <= 3 * se

    def test_explicit_euler_against_recursion(self):
        estimate, se = mc_second_moment("EM", UNIT, 20, 100_000, np.random.default_rng(6))
        assert abs(estimate - moment_recursion("EM", UNIT, 20)[20]) <= 3 * se

    def test_implemented_midpoint_at_large_step(self):
        p = ScalarProblem(a=-4.0, b=1.0, m0=0.0, k=0.1)
        estimate, se = mc_second_moment("MP", p, 10, 100_000, np.random.default_rng(44))
        exact_factor = moment_recursion("MP", p, 10, exact_midpoint=True)[10]
        assert exact_factor == pytest.approx(1 / 1.04, rel=1e-12)
        assert abs(estimate - exact_factor) <= 3 * se
        assert abs(estimate - moment_recursion("MP", p, 10)[10]) > 3 * se

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            mc_second_moment("EM", UNIT, 1, 1, np.random.default_rng(0))


class TestPerModeEquivalence:
    """A PDE run with a single excited mode reproduces the scalar scheme pathwise"""

    @pytest.mark.parametrize("kind,scalar", [("SEXP", "SEXP"), ("MP", "MP"), ("CN", "MP"),
                                             ("BEM", "BEM"), ("SEM", "BEM"), ("EM", "EM")])
    def test_single_mode_trajectory(self, kind, scalar):
        grid = GridSpec(num_modes=8)
        n, lam, k, steps = 2, 0.3, 0.01, 1000
        idx = mode_index(grid, n)
        eigenvalues = np.zeros(8)
        eigenvalues[idx] = lam
        covariance = CovarianceSpec.explicit(eigenvalues, grid)
        stepper = Stepper(kind, ProblemSpec(grid=grid, covariance=covariance), k)

        increments = sample_increment_array(covariance, k, steps, child_rng(10, 0))
        y0 = 0.5 + 0.2j
        u = np.zeros(8, dtype=complex)
        u[idx] = y0
        trajectory = [y0]
        for s in range(steps):
            u = stepper.advance(u, increments[s])
            trajectory.append(u[idx])

        p = ScalarProblem(a=-float(n * n), b=math.sqrt(lam), k=k)
        expected = simulate_path(scalar, p, y0, increments[:, idx])
        assert_allclose(np.array(trajectory), expected, rtol=1e-13, atol=1e-13)
        others = np.delete(u, idx)
        assert np.all(others == 0)


def test_moment_table_columns():
    table = moment_table(UNIT, 5)
    assert list(table) == ["t", "exact", "sexp", "mp", "bem", "em", "mp_exact"]
    assert all(len(column) == 6 for column in table.values())
    assert table["mp_exact"][5] == pytest.approx(0.5 / 1.0025, rel=1e-12)
    assert table["t"][5] == pytest.approx(0.5)
    assert table["em"][2] == pytest.approx(0.201)


def test_scheme_catalogue():
    assert set(SCALAR_SCHEMES) == {"SEXP", "MP", "BEM", "EM"}
