"""
Time integrators for i du = Δu dt + V(x)u dt + G(u) dW on the torus

Kinds:
    SEXP  stochastic exponential integrator  u+ = S(k)(u - ikVu - iG(u)ΔW)
    MP    stochastic implicit midpoint rule
    CN    Crank-Nicolson: trapezoidal in Δ and V, noise on the midpoint state
    BEM   backward Euler-Maruyama, implicit in Δ only
    SEM   semi-implicit Euler-Maruyama, explicit in V(x)u
    EM    explicit Euler-Maruyama

Per mode the free part obeys i dc_n = -n² c_n dt, so the scalar test equation
i dy = a y dt + b dβ is recovered with a = -n², b = λ_n^{1/2}.

The noise is Itô: G(u)ΔW is evaluated at the left endpoint except in MP/CN,
which evaluate it at the midpoint (u+ + u)/2. MP and CN coincide; in the
linear additive case they reduce to the closed-form Cayley update.
"""

from typing import Literal, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from sselab.core.config import settings
from sselab.core.exceptions import (
    ConvergenceError,
    NoiseModeError,
    StepSizeMismatchError,
    UnknownTagError,
)
from sselab.numerics.noise import CovarianceSpec, NoiseIncrement
from sselab.numerics.spectral import (
    GridSpec,
    SpectralState,
    coeffs_to_physical,
    l2_norm_squared,
    physical_to_coeffs,
)

logger = structlog.get_logger(__name__)

SCHEME_KINDS = ("SEXP", "MP", "BEM", "SEM", "CN", "EM")


class ProblemSpec(BaseModel):
    """Equation data shared by every stepper of one experiment"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: GridSpec
    covariance: CovarianceSpec
    noise_mode: Literal["additive", "multiplicative"] = "additive"
    # Nodal values V(x_j); None is the free equation.
    potential: Optional[Tuple[float, ...]] = None

    @field_validator("potential", mode="before")
    @classmethod
    def _real_potential(cls, value):
        if value is None:
            return None
        values = np.asarray(value)
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag), initial=0.0) > 1e-14:
                raise ValueError("potential must be real-valued")
            values = values.real
        return tuple(float(v) for v in np.ravel(values))

    @model_validator(mode="after")
    def _consistent_grid(self) -> "ProblemSpec":
        if self.covariance.grid != self.grid:
            raise ValueError("covariance grid differs from problem grid")
        if self.potential is not None and len(self.potential) != self.grid.num_modes:
            raise ValueError(
                f"potential needs {self.grid.num_modes} nodal values, got {len(self.potential)}"
            )
        return self

    def potential_array(self) -> Optional[np.ndarray]:
        if self.potential is None:
            return None
        return np.array(self.potential, dtype=np.float64)

    @property
    def is_linear_additive(self) -> bool:
        return self.noise_mode == "additive" and self.potential is None


class Stepper:
    """One scheme at a fixed step size, with per-mode multipliers precomputed"""

    def __init__(self, kind: str, problem: ProblemSpec, k: float,
                 max_iters: Optional[int] = None, tol: Optional[float] = None):
        kind = kind.upper()
        if kind not in SCHEME_KINDS:
            raise UnknownTagError(f"unknown scheme '{kind}', expected one of {SCHEME_KINDS}")
        if not k > 0:
            raise StepSizeMismatchError(f"step size must be positive, got {k}")

        self.kind = kind
        self.problem = problem
        self.k = float(k)
        self.max_iters = max_iters if max_iters is not None else settings.FIXED_POINT_MAX_ITERS
        self.tol = tol if tol is not None else settings.FIXED_POINT_TOL

        n = problem.grid.modes().astype(np.float64)
        self.n_squared = n * n
        ikn2 = 1j * self.k * self.n_squared
        self.free_flight = np.exp(ikn2)
        self.cayley_numerator = 1.0 + 0.5 * ikn2
        self.cayley_inverse = 1.0 / (1.0 - 0.5 * ikn2)
        self.implicit_inverse = 1.0 / (1.0 - ikn2)
        self.explicit_factor = 1.0 + ikn2
        self.potential = problem.potential_array()
        self.multiplicative = problem.noise_mode == "multiplicative"

    def with_step(self, k: float) -> "Stepper":
        return Stepper(self.kind, self.problem, k, self.max_iters, self.tol)

    @property
    def max_stiffness(self) -> float:
        """max n²k, the explicit Euler stability indicator"""
        return float(self.k * np.max(self.n_squared))

    def forcing(self, coeffs: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """-ikVu - iG(u)ΔW evaluated at `coeffs`"""
        if self.potential is None and not self.multiplicative:
            return -1j * dw
        physical = coeffs_to_physical(coeffs)
        rhs = np.zeros_like(physical)
        if self.potential is not None:
            rhs -= 1j * self.k * self.potential * physical
        if self.multiplicative:
            rhs -= 1j * physical * coeffs_to_physical(dw)
            return physical_to_coeffs(rhs)
        return physical_to_coeffs(rhs) - 1j * dw

    def advance(self, coeffs: np.ndarray, dw: np.ndarray) -> np.ndarray:
        """Array-level step for this stepper's kind; leading axes are samples"""
        if self.kind == "SEXP":
            return self.free_flight * (coeffs + self.forcing(coeffs, dw))
        if self.kind in ("MP", "CN"):
            return solve_midpoint(self, coeffs, dw)[0]
        if self.kind in ("BEM", "SEM"):
            return self.implicit_inverse * (coeffs + self.forcing(coeffs, dw))
        return self.explicit_factor * coeffs + self.forcing(coeffs, dw)

    def step(self, u: SpectralState, dW: NoiseIncrement) -> SpectralState:
        _check_inputs(u, dW, self)
        return u.with_coeffs(self.advance(u.coeffs, dW.coeffs))


def solve_midpoint(stepper: Stepper, coeffs: np.ndarray, dw: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Solve i(u+ - u)/k = Δ(u+ + u)/2 + V(u+ + u)/2 + G((u+ + u)/2)ΔW/k.

    The Δ part is inverted exactly per mode; V and noise terms are lagged and
    Picard-iterated until the relative update drops below stepper.tol.
    Returns the new coefficients and the number of iterations used.
    """
    base = stepper.cayley_numerator * coeffs
    if stepper.potential is None and not stepper.multiplicative:
        return stepper.cayley_inverse * (base - 1j * dw), 1

    current = stepper.cayley_inverse * (base + stepper.forcing(coeffs, dw))
    residual = np.inf
    for iteration in range(1, stepper.max_iters + 1):
        midpoint = 0.5 * (current + coeffs)
        updated = stepper.cayley_inverse * (base + stepper.forcing(midpoint, dw))
        change = np.sqrt(l2_norm_squared(updated - current))
        scale = np.sqrt(l2_norm_squared(updated))
        relative = np.where(scale > 0, change / np.where(scale > 0, scale, 1.0), change)
        # Non-finite samples are reported by the caller, not iterated on.
        finite = np.isfinite(relative)
        residual = float(np.max(relative[finite], initial=0.0))
        current = updated
        if residual <= stepper.tol:
            if iteration > stepper.max_iters // 2:
                logger.warning("Slow fixed-point convergence", scheme=stepper.kind,
                               k=stepper.k, iterations=iteration)
            return current, iteration
    raise ConvergenceError(stepper.max_iters, residual)


def _check_inputs(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> None:
    if abs(dW.dt - stepper.k) > 1e-12 * stepper.k:
        raise StepSizeMismatchError(f"increment dt={dW.dt} does not match step k={stepper.k}")
    m = stepper.problem.grid.num_modes
    if u.grid != stepper.problem.grid:
        raise NoiseModeError("state grid differs from the problem grid")
    if dW.coeffs.shape[-1] != m:
        raise NoiseModeError(
            f"increment has {dW.coeffs.shape[-1]} modes, covariance is defined on {m}"
        )


def step_sexp(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    _check_inputs(u, dW, stepper)
    return u.with_coeffs(stepper.free_flight * (u.coeffs + stepper.forcing(u.coeffs, dW.coeffs)))


def step_mp(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    _check_inputs(u, dW, stepper)
    return u.with_coeffs(solve_midpoint(stepper, u.coeffs, dW.coeffs)[0])


def step_cn(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    _check_inputs(u, dW, stepper)
    return u.with_coeffs(solve_midpoint(stepper, u.coeffs, dW.coeffs)[0])


def step_bem(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    _check_inputs(u, dW, stepper)
    return u.with_coeffs(stepper.implicit_inverse * (u.coeffs + stepper.forcing(u.coeffs, dW.coeffs)))


def step_sem(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    # Identical update to BEM: Δ implicit, V(x)u and noise explicit.
    return step_bem(u, dW, stepper)


def step_em(u: SpectralState, dW: NoiseIncrement, stepper: Stepper) -> SpectralState:
    _check_inputs(u, dW, stepper)
    return u.with_coeffs(stepper.explicit_factor * u.coeffs + stepper.forcing(u.coeffs, dW.coeffs))
