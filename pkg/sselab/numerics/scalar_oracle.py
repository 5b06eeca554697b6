"""
Scalar test equation i dy = a y dt + b dβ

Each Fourier mode of the linear additive problem is an instance with
a = -n² and b = λ_n^{1/2}. The exact second moment is E|y(0)|² + b²t; the
per-step second-moment maps of the classical schemes distort this line:

    EM    m+ = (1 + a²k²) m + b²k                 (exponential growth)
    BEM   m+ = (m + b²k) / (1 + a²k²)             (bounded by m0 + b²/(a²k))
    MP    m+ = m + b²k / (1 + a²k²/2)             (underestimated slope)
    SEXP  m+ = m + b²k                            (exact)

The MP map above is the closed form used for the drift comparison. The
update actually performed by the midpoint rule has the factor 1 + a²k²/4,
available with exact_midpoint=True and exported as the mp_exact column.
The two agree only while a²k² is small.
"""

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from sselab.core.exceptions import UnknownTagError

SCALAR_SCHEMES = ("SEXP", "MP", "BEM", "EM")


class ScalarProblem(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    a: float
    b: float = Field(..., ge=0)
    m0: float = Field(0.0, ge=0)
    k: float = Field(..., gt=0)


def exact_second_moment(p: ScalarProblem, t: float) -> float:
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    return p.m0 + p.b * p.b * t


def _moment_map(scheme: str, p: ScalarProblem, exact_midpoint: bool) -> Tuple[float, float]:
    """(c, d) with m+ = c·m + d"""
    a2k2 = (p.a * p.k) ** 2
    b2k = p.b * p.b * p.k
    if scheme == "EM":
        return 1.0 + a2k2, b2k
    if scheme == "BEM":
        return 1.0 / (1.0 + a2k2), b2k / (1.0 + a2k2)
    if scheme == "MP":
        return 1.0, b2k / (1.0 + a2k2 / (4.0 if exact_midpoint else 2.0))
    if scheme == "SEXP":
        return 1.0, b2k
    raise UnknownTagError(f"unknown scalar scheme '{scheme}', expected one of {SCALAR_SCHEMES}")


def _two_sum(x: float, y: float) -> Tuple[float, float]:
    s = x + y
    if abs(x) >= abs(y):
        return s, (x - s) + y
    return s, (y - s) + x


_SPLITTER = 134217729.0  # 2**27 + 1


def _split(x: float) -> Tuple[float, float]:
    t = _SPLITTER * x
    high = t - (t - x)
    return high, x - high


def _two_product(x: float, y: float) -> Tuple[float, float]:
    p = x * y
    xh, xl = _split(x)
    yh, yl = _split(y)
    return p, ((xh * yh - p) + xh * yl + xl * yh) + xl * yl


def moment_recursion(scheme: str, p: ScalarProblem, n_steps: int,
                     exact_midpoint: bool = False) -> np.ndarray:
    """E|y^n|² for n = 0..n_steps, propagated in double-double arithmetic"""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    c, d = _moment_map(scheme.upper(), p, exact_midpoint)
    hi, lo = p.m0, 0.0
    out = np.empty(n_steps + 1)
    out[0] = p.m0
    for n in range(1, n_steps + 1):
        hi, product_err = _two_product(c, hi)
        lo = c * lo + product_err
        hi, sum_err = _two_sum(hi, d)
        hi, lo = _two_sum(hi, lo + sum_err)
        out[n] = hi + lo
    return out


def em_growth_lower_bound(p: ScalarProblem, n: int) -> float:
    """(1 + a²k²)^n m0, the noise-free EM moment

    For a²k² small this behaves like e^{(k a²/2) t_n} m0; the exponential
    form undercuts the EM moment only while ln(1 + a²k²) >= a²k²/2.
    """
    if p.m0 == 0:
        return 0.0
    try:
        return (1.0 + (p.a * p.k) ** 2) ** n * p.m0
    except OverflowError:
        return math.inf


def bem_upper_bound(p: ScalarProblem) -> float:
    """m0 + b²/(a²k)"""
    if p.a == 0:
        return math.inf
    return p.m0 + p.b * p.b / (p.a * p.a * p.k)


class ScalarStepper:
    """Pathwise scalar schemes, arithmetic identical to the per-mode PDE steppers"""

    def __init__(self, scheme: str, a: float, k: float):
        scheme = scheme.upper()
        if scheme not in SCALAR_SCHEMES:
            raise UnknownTagError(f"unknown scalar scheme '{scheme}', expected one of {SCALAR_SCHEMES}")
        self.scheme = scheme
        ikn2 = 1j * float(k) * np.array([-a], dtype=np.float64)
        self.free_flight = np.exp(ikn2)
        self.cayley_numerator = 1.0 + 0.5 * ikn2
        self.cayley_inverse = 1.0 / (1.0 - 0.5 * ikn2)
        self.implicit_inverse = 1.0 / (1.0 - ikn2)
        self.explicit_factor = 1.0 + ikn2

    def advance(self, y: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """One step; `noise` is b·Δβ"""
        if self.scheme == "SEXP":
            return self.free_flight * (y + -1j * noise)
        if self.scheme == "MP":
            return self.cayley_inverse * (self.cayley_numerator * y - 1j * noise)
        if self.scheme == "BEM":
            return self.implicit_inverse * (y + -1j * noise)
        return self.explicit_factor * y + -1j * noise


def simulate_path(scheme: str, p: ScalarProblem, y0: complex, noises: Sequence[complex]) -> np.ndarray:
    """Trajectory y^0..y^N driven by the given b·Δβ values"""
    stepper = ScalarStepper(scheme, p.a, p.k)
    path = np.empty(len(noises) + 1, dtype=np.complex128)
    y = np.array([y0], dtype=np.complex128)
    path[0] = y[0]
    for i, noise in enumerate(noises):
        y = stepper.advance(y, np.array([noise], dtype=np.complex128))
        path[i + 1] = y[0]
    return path


def mc_second_moment(scheme: str, p: ScalarProblem, n_steps: int, num_samples: int,
                     rng: np.random.Generator) -> Tuple[float, float]:
    """Sample mean of |y^n|² with complex increments E|Δβ|² = k, and its standard error"""
    if num_samples < 2:
        raise ValueError("num_samples must be at least 2")
    stepper = ScalarStepper(scheme, p.a, p.k)
    y = np.full(num_samples, math.sqrt(p.m0), dtype=np.complex128)
    scale = p.b * math.sqrt(0.5 * p.k)
    for _ in range(n_steps):
        g = rng.standard_normal((2, num_samples))
        y = stepper.advance(y, scale * (g[0] + 1j * g[1]))
    second = y.real ** 2 + y.imag ** 2
    return float(np.mean(second)), float(np.std(second, ddof=1) / math.sqrt(num_samples))


def moment_table(p: ScalarProblem, n_steps: int) -> Dict[str, List[float]]:
    """Columns t, exact, sexp, mp, bem, em, mp_exact for the scalar drift comparison"""
    times = [n * p.k for n in range(n_steps + 1)]
    table: Dict[str, List[float]] = {
        "t": times,
        "exact": [exact_second_moment(p, t) for t in times],
    }
    for scheme in ("SEXP", "MP", "BEM", "EM"):
        table[scheme.lower()] = moment_recursion(scheme, p, n_steps).tolist()
    table["mp_exact"] = moment_recursion("MP", p, n_steps, exact_midpoint=True).tolist()
    return table
