"""
Mass, energy and momentum of spectral states and their expected drift lines
"""

from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from sselab.core.exceptions import UnknownTagError
from sselab.numerics.noise import (
    CovarianceSpec,
    momentum_drift_rate,
    trace_grad_q_grad,
    trace_q,
    trace_qvq,
)
from sselab.numerics.spectral import SpectralState, coeffs_to_physical, l2_norm_squared, quadrature

OBSERVABLES = ("mass", "energy", "energy_with_potential", "momentum")


class ObservableSeries(BaseModel):
    """Ensemble mean of one observable along a time grid, with its theory line"""

    model_config = ConfigDict(extra="forbid")

    observable_name: str
    scheme: str = ""
    step: float = 0.0
    times: List[float]
    values: List[float]
    std_errs: List[float]
    theory: List[float]
    failed_samples: int = 0

    @model_validator(mode="after")
    def _check_shapes(self) -> "ObservableSeries":
        n = len(self.times)
        if not (len(self.values) == len(self.std_errs) == len(self.theory) == n):
            raise ValueError("times, values, std_errs and theory must have equal lengths")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(s < 0 for s in self.std_errs):
            raise ValueError("standard errors must be non-negative")
        return self

    def deviation_in_std_errs(self) -> np.ndarray:
        """|mean - theory| / SE, with 0/0 taken as 0"""
        diff = np.abs(np.array(self.values) - np.array(self.theory))
        se = np.array(self.std_errs)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
        return ratio

    def fraction_within(self, num_std_errs: float = 3.0) -> float:
        return float(np.mean(self.deviation_in_std_errs() <= num_std_errs))


def mass_coeffs(coeffs: np.ndarray) -> np.ndarray:
    return l2_norm_squared(coeffs)


def kinetic_energy_coeffs(coeffs: np.ndarray, n_squared: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(n_squared * (coeffs.real ** 2 + coeffs.imag ** 2), axis=-1)


def potential_energy_coeffs(coeffs: np.ndarray, potential: np.ndarray) -> np.ndarray:
    physical = coeffs_to_physical(coeffs)
    return 0.5 * quadrature(potential * (physical.real ** 2 + physical.imag ** 2))


def momentum_coeffs(coeffs: np.ndarray, modes: np.ndarray) -> np.ndarray:
    return 2.0 * np.sum(modes * (coeffs.real ** 2 + coeffs.imag ** 2), axis=-1)


def mass(u: SpectralState):
    """M(u) = ∫|u|² dx"""
    return mass_coeffs(u.coeffs)


def energy(u: SpectralState, potential: Optional[np.ndarray] = None):
    """H(u) = ½∫|∇u|² dx - ½∫V|u|² dx"""
    n = u.grid.modes().astype(np.float64)
    value = kinetic_energy_coeffs(u.coeffs, n * n)
    if potential is not None:
        value = value - potential_energy_coeffs(u.coeffs, np.asarray(potential, dtype=np.float64))
    return value


def momentum(u: SpectralState):
    """p(u) = i∫(u∇ū - ū∇u) dx = 2Σ n|c_n|²"""
    return momentum_coeffs(u.coeffs, u.grid.modes().astype(np.float64))


def drift_slope(observable: str, spec: CovarianceSpec, potential: Optional[np.ndarray] = None) -> float:
    if observable == "mass":
        return trace_q(spec)
    if observable == "energy":
        return 0.5 * trace_grad_q_grad(spec)
    if observable == "energy_with_potential":
        return 0.5 * (trace_grad_q_grad(spec) - trace_qvq(spec, potential))
    if observable == "momentum":
        return momentum_drift_rate(spec)
    raise UnknownTagError(f"unknown observable '{observable}', expected one of {OBSERVABLES}")


def drift_line(observable: str, spec: CovarianceSpec, potential: Optional[np.ndarray],
               initial_value: float, times: Sequence[float]) -> np.ndarray:
    """initial_value + slope·t for the expected observable under additive noise"""
    slope = drift_slope(observable, spec, potential)
    return initial_value + slope * np.asarray(times, dtype=np.float64)


def mass_defect(series: ObservableSeries) -> tuple:
    """Deviation of the final ensemble mass from its exact line, with its SE"""
    if series.observable_name != "mass":
        raise UnknownTagError("mass defect is defined for mass series only")
    return abs(series.values[-1] - series.theory[-1]), series.std_errs[-1]
