"""Provide common functionality used across the modules."""
import enum
from typing import NoReturn, Optional, Sequence

import numpy as np
import numpy.typing as npt

#: Complex matrix or stack of complex matrices
ComplexArray = npt.NDArray[np.complex128]

#: Real-valued array
RealArray = npt.NDArray[np.float64]

#: Absolute entrywise tolerance on Hermiticity of a density matrix
HERMITICITY_TOL = 1e-12

#: Tolerance on the unit trace of a density matrix
TRACE_TOL = 1e-10

#: Tolerance on negative eigenvalues of a density matrix
POSITIVITY_TOL = 1e-10

#: Hermiticity tolerance for propagated states entering comparisons
PROPAGATED_HERMITICITY_TOL = 1e-8

#: Relative tolerance on the uniformity of time grids
GRID_TOL = 1e-12


def assert_never(value: NoReturn) -> NoReturn:
    """
    Signal to mypy to perform an exhaustive matching.

    Please see the following page for more details:
    https://hakibenita.com/python-mypy-exhaustive-checking
    """
    assert False, f"Unhandled value: {value} ({type(value).__name__})"


def is_square(matrix: npt.NDArray[np.generic]) -> bool:
    """Check that ``matrix`` is a two-dimensional square array."""
    return matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1]


def is_hermitian(
    matrix: npt.NDArray[np.generic], atol: float = HERMITICITY_TOL
) -> bool:
    """Check that the square ``matrix`` equals its adjoint up to ``atol``."""
    if not is_square(matrix):
        return False

    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= atol)


def is_uniform_grid(times: npt.NDArray[np.float64]) -> bool:
    """Check that ``times`` is strictly increasing with a constant spacing."""
    if times.ndim != 1:
        return False

    if len(times) < 2:
        return True

    steps = np.diff(times)
    step = steps[0]
    if step <= 0.0:
        return False

    return bool(
        np.max(np.abs(steps - step)) <= GRID_TOL * max(abs(step), float(times[-1]))
    )


def make_time_grid(dt: float, n_steps: int) -> RealArray:
    """Produce the uniform grid ``0, dt, ..., n_steps * dt``."""
    assert dt > 0.0
    assert n_steps >= 0
    return dt * np.arange(n_steps + 1, dtype=np.float64)


def steps_in(duration: float, dt: float) -> int:
    """Count the grid steps of size ``dt`` in ``duration``, rounding to nearest."""
    return int(round(duration / dt))


class KernelforgeError(Exception):
    """Represent a domain failure that is not a mistake of the caller."""


class FitError(KernelforgeError):
    """Signal that an exponential fit could not reach the tolerance."""

    def __init__(self, message: str, residual: float) -> None:
        """Initialize with the given values."""
        super().__init__(message)
        self.residual = residual


class QuadratureError(KernelforgeError):
    """Signal that a frequency integral did not converge."""


class NumericalInstabilityError(KernelforgeError):
    """Signal that the propagation blew up."""

    def __init__(self, message: str, time: float) -> None:
        """Initialize with the given values."""
        super().__init__(message)
        self.time = time


class ConvergenceError(KernelforgeError):
    """Signal that the relaxation did not become stationary in time."""

    def __init__(self, message: str, derivative_norm: float) -> None:
        """Initialize with the given values."""
        super().__init__(message)
        self.derivative_norm = derivative_norm


class GateThreshold(enum.Enum):
    """Name the thresholds of the decay gate."""

    TENSOR_TAIL = "tensor_tail"
    INHOM_TAIL = "inhom_tail"


class DecayGateError(KernelforgeError):
    """Signal that transfer tensors or inhomogeneities did not decay enough."""

    def __init__(self, message: str, failed: Sequence[GateThreshold]) -> None:
        """Initialize with the given values."""
        super().__init__(message)
        self.failed = list(failed)


class OracleError(KernelforgeError):
    """Signal that the exact diagonalization can not be trusted or afforded."""


class ThermometryError(KernelforgeError):
    """Signal that too few spectral points overlap for a temperature fit."""


class ConfigError(KernelforgeError):
    """Signal an invalid run configuration."""

    def __init__(self, message: str, path: Optional[str] = None) -> None:
        """Initialize with the given values."""
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path
