"""
Complex Q-Wiener process in the Fourier eigenbasis

W(x, t) = Σ_n λ_n^{1/2} β_n(t) e_n(x) with independent circularly symmetric
complex Brownian motions, E|β_n(t)|² = t split as t/2 per real component.
"""

from dataclasses import dataclass
import math
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from sselab.core.exceptions import DivisibilityError, GridMismatchError, StepSizeMismatchError
from sselab.numerics.spectral import GridSpec


class CovarianceSpec(BaseModel):
    """Eigenvalues λ_n of a covariance operator diagonal in the Fourier basis"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["power_decay", "explicit"] = "power_decay"
    exponent: Optional[float] = None
    eigenvalues: Optional[Tuple[float, ...]] = None
    grid: GridSpec
    # Drop the unpaired mode n = -M/2 so the retained spectrum is symmetric.
    symmetric: bool = False

    @model_validator(mode="after")
    def _check_kind(self) -> "CovarianceSpec":
        if self.kind == "power_decay":
            if self.exponent is None or not math.isfinite(self.exponent):
                raise ValueError("power_decay covariance requires a finite exponent")
        else:
            if self.eigenvalues is None:
                raise ValueError("explicit covariance requires eigenvalues")
            if len(self.eigenvalues) != self.grid.num_modes:
                raise ValueError(
                    f"expected {self.grid.num_modes} eigenvalues in signed mode order, "
                    f"got {len(self.eigenvalues)}"
                )
            if any(not math.isfinite(v) or v < 0 for v in self.eigenvalues):
                raise ValueError("eigenvalues must be finite and non-negative")
        return self

    @classmethod
    def power_decay(cls, exponent: float, grid: GridSpec, symmetric: bool = False) -> "CovarianceSpec":
        return cls(kind="power_decay", exponent=exponent, grid=grid, symmetric=symmetric)

    @classmethod
    def explicit(cls, eigenvalues: Sequence[float], grid: GridSpec, symmetric: bool = False) -> "CovarianceSpec":
        return cls(kind="explicit", eigenvalues=tuple(float(v) for v in eigenvalues),
                   grid=grid, symmetric=symmetric)

    def eigenvalue_array(self) -> np.ndarray:
        """λ_n in signed mode order"""
        if self.kind == "power_decay":
            n = np.abs(self.grid.modes().astype(np.float64))
            lam = 1.0 / (1.0 + n ** self.exponent)
        else:
            lam = np.array(self.eigenvalues, dtype=np.float64)
        if self.symmetric:
            lam = lam.copy()
            lam[0] = 0.0
        return lam

    def sqrt_eigenvalues(self) -> np.ndarray:
        return np.sqrt(self.eigenvalue_array())


@dataclass(frozen=True)
class NoiseIncrement:
    """ΔW over one step of length dt, orthonormal-basis coefficients"""

    coeffs: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.complex128))
        if not self.dt > 0:
            raise StepSizeMismatchError(f"increment step must be positive, got {self.dt}")


def child_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for sample `index`, reproducible regardless of scheduling"""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _check_dt(dt: float) -> None:
    if not dt > 0 or not math.isfinite(dt):
        raise StepSizeMismatchError(f"dt must be positive and finite, got {dt}")


def sample_increment_array(spec: CovarianceSpec, dt: float, num_steps: int,
                           rng: np.random.Generator) -> np.ndarray:
    """(num_steps, M) increments; row s equals the s-th sample_increment call on `rng`"""
    _check_dt(dt)
    m = spec.grid.num_modes
    g = rng.standard_normal((num_steps, 2, m))
    xi = (g[:, 0, :] + 1j * g[:, 1, :]) * math.sqrt(0.5 * dt)
    return spec.sqrt_eigenvalues() * xi


def sample_increment(spec: CovarianceSpec, dt: float, rng: np.random.Generator) -> NoiseIncrement:
    return NoiseIncrement(sample_increment_array(spec, dt, 1, rng)[0], dt)


def aggregate_array(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of `factor` rows along the step axis (-2)"""
    if factor < 1:
        raise DivisibilityError(f"aggregation factor must be a positive integer, got {factor}")
    steps = increments.shape[-2]
    if steps % factor:
        raise DivisibilityError(f"{steps} increments cannot be grouped by {factor}")
    if factor == 1:
        return increments
    shape = increments.shape[:-2] + (steps // factor, factor, increments.shape[-1])
    return increments.reshape(shape).sum(axis=-2)


def aggregate(increments: List[NoiseIncrement], factor: int) -> List[NoiseIncrement]:
    """Coarsen an increment sequence by summing groups of `factor` increments"""
    if not increments:
        return []
    dt = increments[0].dt
    if any(not math.isclose(inc.dt, dt, rel_tol=1e-12) for inc in increments):
        raise StepSizeMismatchError("increments must share a uniform dt")
    stacked = np.stack([inc.coeffs for inc in increments], axis=-2)
    summed = aggregate_array(stacked, factor)
    return [NoiseIncrement(summed[..., i, :], dt * factor) for i in range(summed.shape[-2])]


class BrownianPath:
    """Fine-resolution increments of one sample path, coarsened for coupled runs"""

    def __init__(self, increments: np.ndarray, dt: float):
        self.increments = np.asarray(increments, dtype=np.complex128)
        self.dt = dt

    @classmethod
    def sample(cls, spec: CovarianceSpec, dt: float, num_steps: int,
               rng: np.random.Generator) -> "BrownianPath":
        return cls(sample_increment_array(spec, dt, num_steps, rng), dt)

    @property
    def num_steps(self) -> int:
        return self.increments.shape[-2]

    def coarsen(self, factor: int) -> "BrownianPath":
        return BrownianPath(aggregate_array(self.increments, factor), self.dt * factor)

    def checksum(self) -> np.ndarray:
        """W(T) - W(0) per mode; identical at every resolution up to rounding"""
        return self.increments.sum(axis=-2)


def trace_q(spec: CovarianceSpec) -> float:
    """Tr(Q) over the retained modes"""
    return float(np.sum(spec.eigenvalue_array()))


def trace_grad_q_grad(spec: CovarianceSpec) -> float:
    """Tr(∇Q∇) = Σ n² λ_n over the retained modes"""
    n = spec.grid.modes().astype(np.float64)
    return float(np.sum(n * n * spec.eigenvalue_array()))


def momentum_drift_rate(spec: CovarianceSpec) -> float:
    """-2 Im<Q^{1/2}, ∇Q^{1/2}> = 2 Σ n λ_n, the slope of the expected momentum"""
    n = spec.grid.modes().astype(np.float64)
    return float(2.0 * np.sum(n * spec.eigenvalue_array()))


def trace_qvq(spec: CovarianceSpec, potential: Optional[np.ndarray]) -> float:
    """Tr(Q^{1/2} V Q^{1/2}); <V e_n, e_n> = mean(V) for every Fourier mode"""
    if potential is None:
        return 0.0
    potential = np.asarray(potential, dtype=np.float64)
    if potential.shape != (spec.grid.num_modes,):
        raise GridMismatchError(
            f"potential must have {spec.grid.num_modes} nodal values, got shape {potential.shape}"
        )
    return trace_q(spec) * float(np.mean(potential))
