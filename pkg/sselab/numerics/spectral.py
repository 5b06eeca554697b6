"""
Periodic spectral grid on [0, 2π]

Coefficients are stored in the orthonormal basis e_n(x) = e^{inx}/√(2π) with
signed mode order n = -M/2, ..., M/2 - 1 along the last axis. Index i of the
coefficient array holds mode n = i - M/2; `np.fft.ifftshift` maps this layout
to the FFT's native order (n mod M) and `np.fft.fftshift` maps it back.

Leading axes are allowed everywhere and are treated as an ensemble of
independent states sharing one grid.
"""

from dataclasses import dataclass
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from sselab.core.exceptions import GridMismatchError

SQRT_2PI = math.sqrt(2.0 * math.pi)


class GridSpec(BaseModel):
    """Equispaced periodic grid with M nodes and M retained Fourier modes"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_modes: int = Field(..., ge=2)

    @field_validator("num_modes")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("num_modes must be even")
        return value

    @property
    def length(self) -> float:
        return 2.0 * math.pi

    @property
    def dx(self) -> float:
        return self.length / self.num_modes

    def modes(self) -> np.ndarray:
        """Signed mode indices -M/2 ... M/2-1 (integer array)"""
        half = self.num_modes // 2
        return np.arange(-half, half)

    def nodes(self) -> np.ndarray:
        """Physical nodes x_j = 2πj/M"""
        return self.dx * np.arange(self.num_modes)


@dataclass(frozen=True)
class SpectralState:
    """Fourier coefficients of u on a periodic grid"""

    coeffs: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim == 0 or coeffs.shape[-1] != self.grid.num_modes:
            raise GridMismatchError(
                f"expected {self.grid.num_modes} coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid: GridSpec, batch: tuple = ()) -> "SpectralState":
        return cls(np.zeros(batch + (grid.num_modes,), dtype=np.complex128), grid)

    @classmethod
    def single_mode(cls, grid: GridSpec, n: int, value: complex = 1.0) -> "SpectralState":
        coeffs = np.zeros(grid.num_modes, dtype=np.complex128)
        coeffs[mode_index(grid, n)] = value
        return cls(coeffs, grid)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralState":
        return SpectralState(coeffs, self.grid)


def mode_index(grid: GridSpec, n: int) -> int:
    """Array position of signed mode n"""
    half = grid.num_modes // 2
    if not -half <= n < half:
        raise GridMismatchError(f"mode {n} is not retained on a grid with {grid.num_modes} modes")
    return n + half


def coeffs_to_physical(coeffs: np.ndarray) -> np.ndarray:
    """u(x_j) = Σ_n c_n e^{inx_j}/√(2π) for signed-order coefficients"""
    m = coeffs.shape[-1]
    native = np.fft.ifftshift(coeffs, axes=-1)
    return np.fft.ifft(native, axis=-1) * (m / SQRT_2PI)


def physical_to_coeffs(samples: np.ndarray) -> np.ndarray:
    """Inverse of coeffs_to_physical"""
    m = samples.shape[-1]
    native = np.fft.fft(samples, axis=-1) * (SQRT_2PI / m)
    return np.fft.fftshift(native, axes=-1)


def _check_same_grid(a: SpectralState, b: SpectralState) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(
            f"grid mismatch: {a.grid.num_modes} vs {b.grid.num_modes} modes"
        )


def to_physical(state: SpectralState) -> np.ndarray:
    return coeffs_to_physical(state.coeffs)


def from_physical(samples, grid: GridSpec) -> SpectralState:
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim == 0 or samples.shape[-1] != grid.num_modes:
        raise GridMismatchError(
            f"expected {grid.num_modes} samples, got shape {samples.shape}"
        )
    return SpectralState(physical_to_coeffs(samples), grid)


def semigroup_multiplier(grid: GridSpec, t: float) -> np.ndarray:
    """Per-mode symbol e^{itn²} of S(t) = e^{-itΔ}"""
    n = grid.modes().astype(np.float64)
    return np.exp(1j * t * n * n)


def apply_semigroup(state: SpectralState, t: float) -> SpectralState:
    """Exact free Schrödinger flow over time t (any sign)"""
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    return state.with_coeffs(state.coeffs * semigroup_multiplier(state.grid, t))


def laplacian(state: SpectralState) -> SpectralState:
    n = state.grid.modes().astype(np.float64)
    return state.with_coeffs(-(n * n) * state.coeffs)


def gradient(state: SpectralState) -> SpectralState:
    n = state.grid.modes().astype(np.float64)
    return state.with_coeffs(1j * n * state.coeffs)


def dealias(state: SpectralState) -> SpectralState:
    """2/3-rule truncation: zero every mode with |n| > M/3"""
    n = state.grid.modes()
    keep = np.abs(n) <= state.grid.num_modes // 3
    return state.with_coeffs(np.where(keep, state.coeffs, 0.0))


def multiply_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pseudospectral product of two coefficient arrays (no dealiasing)"""
    return physical_to_coeffs(coeffs_to_physical(a) * coeffs_to_physical(b))


def pointwise_multiply(a: SpectralState, b: SpectralState, dealias_product: bool = False) -> SpectralState:
    """Nodewise product evaluated in physical space"""
    _check_same_grid(a, b)
    if dealias_product:
        a, b = dealias(a), dealias(b)
        return dealias(a.with_coeffs(multiply_coeffs(a.coeffs, b.coeffs)))
    return a.with_coeffs(multiply_coeffs(a.coeffs, b.coeffs))


def l2_norm_squared(coeffs: np.ndarray) -> np.ndarray:
    """∫|u|² via Parseval, reduced over the mode axis"""
    return np.sum(coeffs.real ** 2 + coeffs.imag ** 2, axis=-1)


def quadrature(values: np.ndarray) -> np.ndarray:
    """Trapezoidal (spectrally exact) integral over the torus of nodal values"""
    m = values.shape[-1]
    return (2.0 * math.pi / m) * np.sum(values, axis=-1)
