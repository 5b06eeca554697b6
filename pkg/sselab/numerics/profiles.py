"""
Named initial data and potentials used by the experiment presets
"""

from typing import Callable, Dict, Optional

import numpy as np

from sselab.core.exceptions import UnknownTagError
from sselab.numerics.spectral import GridSpec, SpectralState, from_physical


INITIAL_PROFILES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": lambda x: np.zeros_like(x, dtype=np.complex128),
    "bump": lambda x: 2.0 / (2.0 - np.cos(x)),
    "gaussian": lambda x: np.exp(-5.0 * (x - np.pi) ** 2),
    "plane_wave": lambda x: np.exp(1j * x),
}

POTENTIAL_PROFILES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "bounded": lambda x: 1.0 / (1.0 + np.sin(x) ** 2),
    "constant": lambda x: np.ones_like(x),
}


def initial_profile(name: str, grid: GridSpec) -> SpectralState:
    """Interpolate a named initial condition onto the grid"""
    try:
        profile = INITIAL_PROFILES[name]
    except KeyError:
        raise UnknownTagError(
            f"unknown initial profile '{name}', expected one of {sorted(INITIAL_PROFILES)}"
        ) from None
    return from_physical(profile(grid.nodes()), grid)


def potential_profile(name: Optional[str], grid: GridSpec) -> Optional[np.ndarray]:
    """Nodal values of a named potential, None for the free equation"""
    if name is None or name == "none":
        return None
    try:
        profile = POTENTIAL_PROFILES[name]
    except KeyError:
        raise UnknownTagError(
            f"unknown potential '{name}', expected one of {['none'] + sorted(POTENTIAL_PROFILES)}"
        ) from None
    return np.asarray(profile(grid.nodes()), dtype=np.float64)
