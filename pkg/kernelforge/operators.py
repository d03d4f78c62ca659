"""
Provide the dense operator algebra of the reduced system.

Matrices are vectorized column-major everywhere in this package, so that
``vec(A X B) = (B^T ⊗ A) vec(X)``.
"""
import enum
import pathlib
from typing import Final, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.integrate
from icontract import DBC, ensure, invariant, require

from kernelforge.common import (
    ComplexArray,
    HERMITICITY_TOL,
    POSITIVITY_TOL,
    PROPAGATED_HERMITICITY_TOL,
    RealArray,
    TRACE_TOL,
    is_hermitian,
    is_square,
    is_uniform_grid,
)


# fmt: off
@invariant(
    lambda self: is_hermitian(self.entries, atol=HERMITICITY_TOL),
    "Hermitian"
)
@invariant(
    lambda self: abs(np.trace(self.entries) - 1.0) <= TRACE_TOL,
    "Unit trace"
)
@invariant(
    lambda self:
    float(np.min(np.linalg.eigvalsh(self.entries))) >= -POSITIVITY_TOL,
    "Positive semi-definite"
)
# fmt: on
class DensityMatrix(DBC):
    """Represent a physical state of the reduced system."""

    #: Complex matrix of size ``dim × dim``
    entries: Final[ComplexArray]

    @require(lambda entries: is_square(np.asarray(entries)))
    def __init__(self, entries: npt.ArrayLike) -> None:
        """Initialize with a copy of ``entries``."""
        self.entries = np.array(entries, dtype=np.complex128)
        self.entries.setflags(write=False)

    @property
    def dim(self) -> int:
        """Give the dimension of the system."""
        return int(self.entries.shape[0])

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.entries.tolist()!r})"


@invariant(lambda self: bool(np.all(np.isfinite(self.entries))), "Finite entries")
class ReducedOperator(DBC):
    """
    Represent a reduced operator which is not necessarily a state.

    The one-sided absorption and emission operators as well as the coherence
    blocks prepared by a dipole are housed here.
    """

    #: Complex matrix of size ``dim × dim``
    entries: Final[ComplexArray]

    @require(lambda entries: is_square(np.asarray(entries)))
    def __init__(self, entries: npt.ArrayLike) -> None:
        """Initialize with a copy of ``entries``."""
        self.entries = np.array(entries, dtype=np.complex128)
        self.entries.setflags(write=False)

    @property
    def dim(self) -> int:
        """Give the dimension of the system."""
        return int(self.entries.shape[0])

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.entries.tolist()!r})"


#: Anything that can be read as a reduced matrix
MatrixLike = Union[DensityMatrix, ReducedOperator, ComplexArray]


def as_matrix(value: MatrixLike) -> ComplexArray:
    """Unwrap ``value`` to its complex entries."""
    if isinstance(value, (DensityMatrix, ReducedOperator)):
        return value.entries

    return np.asarray(value, dtype=np.complex128)


@require(lambda matrix: is_square(np.asarray(as_matrix(matrix))))
@ensure(lambda matrix, result: result.shape == (as_matrix(matrix).size,))
def vectorize(matrix: MatrixLike) -> ComplexArray:
    """Stack the columns of ``matrix`` into a vector."""
    return np.asarray(as_matrix(matrix).reshape(-1, order="F"), dtype=np.complex128)


@require(lambda vector: vector.ndim == 1)
@require(
    lambda vector: int(round(np.sqrt(vector.shape[0]))) ** 2 == vector.shape[0],
    "Length of the vector is a perfect square",
)
def unvectorize(vector: ComplexArray) -> ComplexArray:
    """Invert :py:func:`vectorize`."""
    dim = int(round(np.sqrt(vector.shape[0])))
    return np.asarray(vector.reshape((dim, dim), order="F"), dtype=np.complex128)


@invariant(
    lambda self: self.entries.shape == (self.dim**2, self.dim**2),
    "Acts on vectorized dim × dim matrices",
)
class SuperOperator(DBC):
    """Represent a linear map on column-vectorized reduced matrices."""

    #: Dimension of the reduced system
    dim: Final[int]

    #: Complex matrix of size ``dim² × dim²``
    entries: Final[ComplexArray]

    @require(lambda dim: dim >= 1)
    def __init__(self, dim: int, entries: npt.ArrayLike) -> None:
        """Initialize with the given values."""
        self.dim = dim
        self.entries = np.array(entries, dtype=np.complex128)
        self.entries.setflags(write=False)

    @staticmethod
    def identity(dim: int) -> "SuperOperator":
        """Produce the identity map on ``dim × dim`` matrices."""
        return SuperOperator(dim=dim, entries=np.eye(dim * dim, dtype=np.complex128))


@require(lambda left, right: left.dim == right.dim)
@ensure(lambda left, result: result.dim == left.dim)
def compose_maps(left: SuperOperator, right: SuperOperator) -> SuperOperator:
    """Compose the maps so that the ``right`` one is applied first."""
    return SuperOperator(dim=left.dim, entries=left.entries @ right.entries)


@require(lambda left, right: is_square(left) and left.shape == right.shape)
def superoperator_from_sandwich(
    left: ComplexArray, right: ComplexArray
) -> SuperOperator:
    """Build the map ``ρ ↦ left · ρ · right†``."""
    return SuperOperator(
        dim=left.shape[0], entries=np.kron(np.conj(right), np.asarray(left))
    )


@require(
    lambda superoperator, matrix: as_matrix(matrix).shape
    == (superoperator.dim, superoperator.dim)
)
def apply(superoperator: SuperOperator, matrix: MatrixLike) -> ComplexArray:
    """Apply ``superoperator`` to the reduced ``matrix``."""
    return unvectorize(superoperator.entries @ vectorize(matrix))


@require(lambda a, b: as_matrix(a).shape == as_matrix(b).shape)
@require(
    lambda a: is_hermitian(as_matrix(a), atol=PROPAGATED_HERMITICITY_TOL),
    "First argument Hermitian",
)
@require(
    lambda b: is_hermitian(as_matrix(b), atol=PROPAGATED_HERMITICITY_TOL),
    "Second argument Hermitian",
)
@ensure(lambda result: result >= 0.0)
def trace_distance(a: MatrixLike, b: MatrixLike) -> float:
    """
    Compute half of the trace norm of the difference of ``a`` and ``b``.

    The difference is symmetrized before the eigendecomposition so that
    propagated states within the Hermiticity tolerance are accepted.
    """
    difference = as_matrix(a) - as_matrix(b)
    difference = 0.5 * (difference + difference.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(difference))))


class Block:
    """
    Represent an ordered set of matrix positions spanning an operator subspace.

    The positions of :py:meth:`full` follow the column-major vectorization,
    so that extracting the full block coincides with :py:func:`vectorize`.
    """

    #: Dimension of the matrices the block lives in
    dim: Final[int]

    #: ``(row, column)`` positions in their vector order
    positions: Final[Tuple[Tuple[int, int], ...]]

    @require(lambda dim: dim >= 1)
    @require(lambda positions: len(positions) >= 1)
    @require(
        lambda dim, positions: all(
            0 <= row < dim and 0 <= column < dim for row, column in positions
        )
    )
    @require(lambda positions: len(set(positions)) == len(positions), "Unique")
    def __init__(self, dim: int, positions: Sequence[Tuple[int, int]]) -> None:
        """Initialize with the given values."""
        self.dim = dim
        self.positions = tuple((int(row), int(column)) for row, column in positions)
        self._rows = np.array([row for row, _ in self.positions], dtype=np.intp)
        self._columns = np.array(
            [column for _, column in self.positions], dtype=np.intp
        )

    @staticmethod
    def full(dim: int) -> "Block":
        """Span all the ``dim × dim`` matrices."""
        return Block(
            dim=dim,
            positions=[(row, column) for column in range(dim) for row in range(dim)],
        )

    @staticmethod
    def coherence(dim: int, excited: Sequence[int], ground: int) -> "Block":
        """Span the coherences ``|e_i⟩⟨g|`` of the excited levels."""
        return Block(dim=dim, positions=[(row, ground) for row in excited])

    @property
    def size(self) -> int:
        """Give the number of positions."""
        return len(self.positions)

    def is_full(self) -> bool:
        """Check whether the block spans the whole matrix space."""
        return self.size == self.dim * self.dim

    def extract(self, matrix: MatrixLike) -> ComplexArray:
        """Read the block entries of ``matrix`` as a vector."""
        entries = as_matrix(matrix)
        assert entries.shape == (self.dim, self.dim)
        return np.array(entries[self._rows, self._columns], dtype=np.complex128)

    def extract_stack(self, matrices: ComplexArray) -> ComplexArray:
        """Read the block entries of a ``(n, dim, dim)`` stack as ``(n, size)``."""
        assert matrices.ndim == 3 and matrices.shape[1:] == (self.dim, self.dim)
        return np.array(matrices[:, self._rows, self._columns], dtype=np.complex128)

    def embed(self, vector: ComplexArray) -> ComplexArray:
        """Write the block ``vector`` into a zero ``dim × dim`` matrix."""
        assert vector.shape == (self.size,)
        result = np.zeros((self.dim, self.dim), dtype=np.complex128)
        result[self._rows, self._columns] = vector
        return result

    def embed_stack(self, vectors: ComplexArray) -> ComplexArray:
        """Write a ``(n, size)`` stack of block vectors into ``(n, dim, dim)``."""
        assert vectors.ndim == 2 and vectors.shape[1] == self.size
        result = np.zeros((vectors.shape[0], self.dim, self.dim), dtype=np.complex128)
        result[:, self._rows, self._columns] = vectors
        return result

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Block):
            return NotImplemented

        return self.dim == other.dim and self.positions == other.positions

    def __hash__(self) -> int:
        return hash((self.dim, self.positions))

    def __repr__(self) -> str:
        return f"Block(dim={self.dim!r}, positions={list(self.positions)!r})"


# fmt: off
@invariant(
    lambda self: self.times.ndim == 1 and len(self.times) >= 1,
    "Non-empty one-dimensional time grid"
)
@invariant(
    lambda self: is_uniform_grid(self.times),
    "Uniform, strictly increasing grid"
)
@invariant(
    lambda self:
    self.values.ndim == 3
    and self.values.shape[0] == len(self.times)
    and self.values.shape[1] == self.values.shape[2],
    "One square matrix per time point"
)
# fmt: on
class Trajectory(DBC):
    """Represent reduced matrices sampled on a uniform time grid."""

    #: Time points in units of 1/ε
    times: Final[RealArray]

    #: Stack of reduced matrices, one per time point
    values: Final[ComplexArray]

    def __init__(self, times: npt.ArrayLike, values: npt.ArrayLike) -> None:
        """Initialize with copies of the given arrays."""
        self.times = np.array(times, dtype=np.float64)
        self.values = np.array(values, dtype=np.complex128)
        self.times.setflags(write=False)
        self.values.setflags(write=False)

    @staticmethod
    def on_grid(dt: float, values: npt.ArrayLike) -> "Trajectory":
        """Place ``values`` on the grid ``0, dt, 2 dt, ...``."""
        values_array = np.asarray(values, dtype=np.complex128)
        return Trajectory(
            times=dt * np.arange(values_array.shape[0], dtype=np.float64),
            values=values_array,
        )

    @property
    def dim(self) -> int:
        """Give the dimension of the reduced matrices."""
        return int(self.values.shape[1])

    @property
    def dt(self) -> float:
        """Give the grid spacing, or zero for a single time point."""
        if len(self.times) < 2:
            return 0.0

        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)

    def truncated(self, length: int) -> "Trajectory":
        """Keep only the first ``length`` time points."""
        assert 1 <= length <= len(self)
        return Trajectory(times=self.times[:length], values=self.values[:length])


def same_grid(a: Trajectory, b: Trajectory) -> bool:
    """Check that the two trajectories are sampled at the same times."""
    return a.times.shape == b.times.shape and bool(
        np.allclose(a.times, b.times, rtol=1e-12, atol=0.0)
    )


@require(lambda a, b: same_grid(a, b), "Identical grids")
@require(lambda a, b: a.dim == b.dim)
def pointwise_trace_distance(a: Trajectory, b: Trajectory) -> RealArray:
    """Compute the trace distance at every time point."""
    return np.array(
        [trace_distance(left, right) for left, right in zip(a.values, b.values)],
        dtype=np.float64,
    )


@require(lambda a, b: same_grid(a, b), "Identical grids")
@require(lambda a, b: a.dim == b.dim)
@require(lambda horizon: horizon >= 0.0)
@require(
    lambda a, horizon: horizon <= float(a.times[-1]) * (1.0 + 1e-12),
    "Horizon within the grid",
)
@ensure(lambda result: result >= 0.0)
def cumulative_trace_distance(a: Trajectory, b: Trajectory, horizon: float) -> float:
    """
    Integrate the pointwise trace distance over ``[t_0, t_0 + horizon]``.

    The trapezoidal rule is used; a horizon between grid points is covered by
    linear interpolation of the distance over the last partial interval.
    """
    if len(a) < 2 or horizon == 0.0:
        return 0.0

    distances = pointwise_trace_distance(a, b)
    dt = a.dt
    elapsed = horizon / dt
    whole = min(int(np.floor(elapsed + 1e-9)), len(a) - 1)

    result = 0.0
    if whole >= 1:
        result = float(scipy.integrate.trapezoid(distances[: whole + 1], dx=dt))

    fraction = elapsed - whole
    if fraction > 1e-9 and whole + 1 < len(a):
        interpolated = distances[whole] + fraction * (
            distances[whole + 1] - distances[whole]
        )
        result += 0.5 * fraction * dt * (distances[whole] + interpolated)

    return result


@require(lambda trajectory, observable: observable.shape == (trajectory.dim,) * 2)
def expectation(trajectory: Trajectory, observable: ComplexArray) -> RealArray:
    """Compute the real part of ``tr{O ρ(t)}`` at every time point."""
    return np.real(np.einsum("ij,nji->n", observable, trajectory.values))


def _csv_header(dim: int) -> List[str]:
    header = ["t"]
    for row in range(dim):
        for column in range(dim):
            header.append(f"re_{row}_{column}")
            header.append(f"im_{row}_{column}")
    return header


def write_trajectory_csv(trajectory: Trajectory, path: pathlib.Path) -> None:
    """
    Write the trajectory as CSV with the header row.

    The entries are listed per time point in row-major order, real part
    before imaginary part.
    """
    count = len(trajectory)
    dim = trajectory.dim
    flat = trajectory.values.reshape(count, dim * dim)

    table = np.empty((count, 1 + 2 * dim * dim), dtype=np.float64)
    table[:, 0] = trajectory.times
    table[:, 1::2] = flat.real
    table[:, 2::2] = flat.imag

    np.savetxt(
        str(path),
        table,
        delimiter=",",
        header=",".join(_csv_header(dim)),
        comments="",
        fmt="%.17g",
    )


@ensure(lambda result: (result[0] is not None) ^ (result[1] is not None))
def read_trajectory_csv(
    path: pathlib.Path,
) -> Tuple[Optional[Trajectory], Optional[str]]:
    """Read the trajectory written by :py:func:`write_trajectory_csv`."""
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if len(lines) == 0:
        return None, f"Expected a header row in {path}, but the file is empty"

    header = lines[0].split(",")
    columns = len(header)
    dim = int(round(np.sqrt((columns - 1) / 2)))
    if columns < 3 or 1 + 2 * dim * dim != columns or header != _csv_header(dim):
        return None, f"Unexpected header in {path}: {lines[0]!r}"

    table = np.loadtxt(str(path), delimiter=",", skiprows=1, ndmin=2)
    if table.shape[0] == 0:
        return None, f"Expected at least one time point in {path}"

    values = (table[:, 1::2] + 1j * table[:, 2::2]).reshape(table.shape[0], dim, dim)
    times = table[:, 0]
    if not is_uniform_grid(times):
        return None, f"The time column in {path} is not a uniform grid"

    return Trajectory(times=times, values=values), None


class CorrelationKind(enum.Enum):
    """Distinguish the two dipole correlation functions."""

    ABSORPTION = "absorption"
    EMISSION = "emission"


@invariant(lambda self: self.dt > 0.0)
@invariant(lambda self: self.values.ndim == 1 and len(self.values) >= 1)
class ComplexTimeSeries(DBC):
    """Represent a complex function sampled at ``0, dt, 2 dt, ...``."""

    #: Grid spacing in units of 1/ε
    dt: Final[float]

    #: Sampled values
    values: Final[ComplexArray]

    #: Which dipole correlation function is sampled, if any
    kind: Final[Optional[CorrelationKind]]

    def __init__(
        self,
        dt: float,
        values: npt.ArrayLike,
        kind: Optional[CorrelationKind] = None,
    ) -> None:
        """Initialize with a copy of ``values``."""
        self.dt = float(dt)
        self.values = np.array(values, dtype=np.complex128)
        self.values.setflags(write=False)
        self.kind = kind

    @property
    def times(self) -> RealArray:
        """Give the time points of the samples."""
        return self.dt * np.arange(len(self.values), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.values)
