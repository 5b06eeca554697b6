"""
Exception hierarchy for sselab
"""

from typing import Optional


class SSELabError(Exception):
    """Base class for every error raised by the package"""


class GridMismatchError(SSELabError, ValueError):
    """Operands live on different grids or have the wrong length"""


class StepSizeMismatchError(SSELabError, ValueError):
    """A noise increment does not match the stepper's step size"""


class NoiseModeError(SSELabError, ValueError):
    """Noise increment is inconsistent with the problem's noise model"""


class DivisibilityError(SSELabError, ValueError):
    """Step sizes or increment counts are not integer multiples of each other"""


class UnknownTagError(SSELabError, ValueError):
    """An observable, scheme or profile name is not recognised"""


class ConfigurationError(SSELabError, ValueError):
    """Invalid or incomplete run configuration"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class ConvergenceError(SSELabError, RuntimeError):
    """A fixed-point solve exceeded its iteration budget"""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"fixed-point iteration did not converge after {iterations} iterations "
            f"(last relative update {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class NumericalFailureError(SSELabError, RuntimeError):
    """Too many Monte Carlo samples produced non-finite states"""

    def __init__(self, failed: int, total: int):
        super().__init__(f"{failed} of {total} samples produced non-finite states")
        self.failed = failed
        self.total = total
