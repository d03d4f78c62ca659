"""
Propagate reduced operators with the hierarchical equations of motion.

Every coupling ``Q`` sees a bath kernel ``C(t) = Σ_k a_k exp(-ν_k t)``. The
hierarchy has one index per distinct rate of ``C`` and ``C*``; an auxiliary
density operator (ADO) with the multi-index ``n`` evolves as

    dρ_n/dt = -i[H_S, ρ_n] - Σ_k n_k ν_k ρ_n
              - i Σ_k [Q_k, ρ_{n+e_k}]
              - i Σ_k n_k (a_k Q_k ρ_{n-e_k} - b_k ρ_{n-e_k} Q_k),

where ``a_k`` collects the amplitudes of ``C`` and ``b_k`` those of ``C*``
at the rate ``ν_k``. The hierarchy is truncated at ``Σ n_k ≤ L``.
"""
import functools
import json
import logging
import math
import pathlib
import struct
from typing import (
    Any,
    Callable,
    Final,
    List,
    Mapping,
    MutableMapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
import numpy.typing as npt
import scipy.sparse
import scipy.sparse.linalg
from icontract import DBC, ensure, invariant, require

from kernelforge.common import (
    ComplexArray,
    ConvergenceError,
    NumericalInstabilityError,
    RealArray,
    is_uniform_grid,
    make_time_grid,
    steps_in,
)
from kernelforge.models import HamiltonianModel, PreparativeMap
from kernelforge.operators import (
    MatrixLike,
    ReducedOperator,
    Trajectory,
    as_matrix,
)

LOGGER = logging.getLogger(__name__)

#: Runge-Kutta steps per grid step
DEFAULT_SUBSTEPS: Final = 10

#: Default truncation depth of the hierarchy
DEFAULT_DEPTH: Final = 8

#: Frobenius norm of an ADO beyond which the propagation is deemed unstable
INSTABILITY_BOUND: Final = 1e6

#: Rates closer than this (relative) share a hierarchy index
RATE_MERGE_TOL: Final = 1e-10

#: Duration propagated between two stationarity checks of the relaxation
DEFAULT_RELAXATION_CHUNK: Final = 1.0

#: Largest step of the relaxation as a fraction of the stable step
RELAXATION_SAFETY: Final = 0.8


class HierarchyExponent:
    """Represent one hierarchy index: a rate of ``C`` or ``C*`` of a coupling."""

    #: Position of the coupling in the model
    coupling: Final[int]

    rate: Final[complex]

    #: Amplitude in the expansion of ``C`` at this rate
    amplitude: Final[complex]

    #: Amplitude in the expansion of ``C*`` at this rate
    conjugate_amplitude: Final[complex]

    def __init__(
        self,
        coupling: int,
        rate: complex,
        amplitude: complex,
        conjugate_amplitude: complex,
    ) -> None:
        """Initialize with the given values."""
        self.coupling = coupling
        self.rate = complex(rate)
        self.amplitude = complex(amplitude)
        self.conjugate_amplitude = complex(conjugate_amplitude)

    @property
    def scale(self) -> float:
        """Give the magnitude used to normalize the scaled ADOs."""
        return max(abs(self.amplitude), abs(self.conjugate_amplitude))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HierarchyExponent):
            return NotImplemented

        return (
            self.coupling == other.coupling
            and self.rate == other.rate
            and self.amplitude == other.amplitude
            and self.conjugate_amplitude == other.conjugate_amplitude
        )

    def __hash__(self) -> int:
        return hash(
            (self.coupling, self.rate, self.amplitude, self.conjugate_amplitude)
        )

    def __repr__(self) -> str:
        return (
            f"HierarchyExponent(coupling={self.coupling!r}, rate={self.rate!r}, "
            f"amplitude={self.amplitude!r}, "
            f"conjugate_amplitude={self.conjugate_amplitude!r})"
        )


def hierarchy_exponents(model: HamiltonianModel) -> List[HierarchyExponent]:
    """
    Collect the hierarchy indices of all the couplings of ``model``.

    A real rate carries both amplitudes on a single index; a complex rate
    and its conjugate get an index each unless the expansion already pairs
    them.
    """
    result = []  # type: List[HierarchyExponent]
    for coupling_index, coupling in enumerate(model.couplings):
        # Entries are [rate, amplitude, conjugate amplitude].
        entries = []  # type: List[List[complex]]

        def add(
            rate: complex, amplitude: complex, conjugate_amplitude: complex
        ) -> None:
            for entry in entries:
                if abs(entry[0] - rate) <= RATE_MERGE_TOL * max(abs(rate), 1.0):
                    entry[1] += amplitude
                    entry[2] += conjugate_amplitude
                    return
            entries.append([rate, amplitude, conjugate_amplitude])

        for term in coupling.bath.expansion:
            add(term.rate, term.amplitude, 0.0j)
            add(term.rate.conjugate(), 0.0j, term.amplitude.conjugate())

        for rate, amplitude, conjugate_amplitude in entries:
            if amplitude == 0.0 and conjugate_amplitude == 0.0:
                continue

            result.append(
                HierarchyExponent(
                    coupling=coupling_index,
                    rate=rate,
                    amplitude=amplitude,
                    conjugate_amplitude=conjugate_amplitude,
                )
            )

    return result


@require(lambda count: count >= 0)
@require(lambda depth: depth >= 1)
@ensure(lambda count, result: all(len(index) == count for index in result))
@ensure(lambda result: result[0] == tuple([0] * len(result[0])))
@ensure(lambda result: result == sorted(result), "Lexicographic order")
@ensure(lambda result: _is_closed_under_lowering(result))
def enumerate_indices(count: int, depth: int) -> List[Tuple[int, ...]]:
    """List all the multi-indices of ``count`` entries summing to at most ``depth``."""
    result = []  # type: List[Tuple[int, ...]]
    prefix = [0] * count

    def extend(position: int, remaining: int) -> None:
        if position == count:
            result.append(tuple(prefix))
            return

        for value in range(remaining + 1):
            prefix[position] = value
            extend(position + 1, remaining - value)
        prefix[position] = 0

    extend(0, depth)
    return result


def _is_closed_under_lowering(indices: Sequence[Tuple[int, ...]]) -> bool:
    known = set(indices)
    for index in indices:
        for position, value in enumerate(index):
            if value > 0:
                lowered = index[:position] + (value - 1,) + index[position + 1 :]
                if lowered not in known:
                    return False
    return True


# fmt: off
@invariant(lambda self: self.depth >= 1)
@invariant(
    lambda self:
    self.ados.shape == (len(self.indices), self.dim, self.dim),
    "One ADO per multi-index"
)
@invariant(
    lambda self: all(len(index) == len(self.exponents) for index in self.indices)
)
@invariant(
    lambda self: self.indices[0] == tuple([0] * len(self.exponents)),
    "The physical reduced operator comes first"
)
@invariant(lambda self: bool(np.all(np.isfinite(self.ados))), "Finite ADOs")
# fmt: on
class HierarchyState(DBC):
    """Represent all the ADOs of a truncated hierarchy at one time point."""

    #: Dimension of the system
    dim: Final[int]

    #: Truncation depth ``L``
    depth: Final[int]

    #: Hierarchy indices with their couplings, rates and amplitudes
    exponents: Final[Tuple[HierarchyExponent, ...]]

    #: Multi-indices in lexicographic order
    indices: Final[Tuple[Tuple[int, ...], ...]]

    #: ADOs stacked in the order of :py:attr:`indices`
    ados: Final[ComplexArray]

    #: Time of the state in units of 1/ε
    time: Final[float]

    #: Whether the ADOs are stored in the normalized representation
    scaled: Final[bool]

    def __init__(
        self,
        dim: int,
        depth: int,
        exponents: Sequence[HierarchyExponent],
        indices: Sequence[Tuple[int, ...]],
        ados: npt.ArrayLike,
        time: float = 0.0,
        scaled: bool = False,
    ) -> None:
        """Initialize with the given values."""
        self.dim = dim
        self.depth = depth
        self.exponents = tuple(exponents)
        self.indices = tuple(indices)
        self.ados = np.array(ados, dtype=np.complex128)
        self.ados.setflags(write=False)
        self.time = float(time)
        self.scaled = scaled

    def ado(self, index: Sequence[int]) -> ComplexArray:
        """Give the ADO of the multi-``index``."""
        position = self.indices.index(tuple(index))
        return np.array(self.ados[position])

    def with_ados(self, ados: npt.ArrayLike) -> "HierarchyState":
        """Copy the state with the ``ados`` replaced."""
        return HierarchyState(
            dim=self.dim,
            depth=self.depth,
            exponents=self.exponents,
            indices=self.indices,
            ados=ados,
            time=self.time,
            scaled=self.scaled,
        )


def _to_vector(ados: ComplexArray) -> ComplexArray:
    """Vectorize every ADO column-major and concatenate them."""
    return np.ascontiguousarray(ados.transpose(0, 2, 1)).reshape(-1)


def _from_vector(vector: ComplexArray, count: int, dim: int) -> ComplexArray:
    return np.ascontiguousarray(vector.reshape(count, dim, dim).transpose(0, 2, 1))


def _left(operator: ComplexArray) -> "scipy.sparse.csr_matrix":
    """Represent ``ρ ↦ A ρ`` on column-major vectors."""
    dim = operator.shape[0]
    return scipy.sparse.kron(
        scipy.sparse.identity(dim, dtype=np.complex128, format="csr"),
        scipy.sparse.csr_matrix(operator),
        format="csr",
    )


def _right(operator: ComplexArray) -> "scipy.sparse.csr_matrix":
    """Represent ``ρ ↦ ρ A`` on column-major vectors."""
    dim = operator.shape[0]
    return scipy.sparse.kron(
        scipy.sparse.csr_matrix(operator.T),
        scipy.sparse.identity(dim, dtype=np.complex128, format="csr"),
        format="csr",
    )


class HierarchyPropagator:
    """
    Hold the generator of a truncated hierarchy and integrate it.

    The generator is assembled once as a sparse matrix acting on the
    concatenated column-major ADOs. Propagation uses the classical fourth-order
    Runge-Kutta scheme with a fixed number of substeps per grid step.
    """

    model: Final[HamiltonianModel]
    depth: Final[int]
    scaled: Final[bool]
    substeps: Final[int]
    exponents: Final[Tuple[HierarchyExponent, ...]]
    indices: Final[Tuple[Tuple[int, ...], ...]]

    #: Sparse generator of the whole hierarchy
    generator: Final["scipy.sparse.csr_matrix"]

    #: Largest Runge-Kutta step guaranteed to be stable
    stable_step: Final[float]

    @require(lambda depth: depth >= 1)
    @require(lambda substeps: substeps >= 1)
    def __init__(
        self,
        model: HamiltonianModel,
        depth: int,
        scaled: bool = False,
        substeps: int = DEFAULT_SUBSTEPS,
        instability_bound: float = INSTABILITY_BOUND,
    ) -> None:
        """Assemble the generator of the hierarchy of ``model``."""
        self.model = model
        self.depth = depth
        self.scaled = scaled
        self.substeps = substeps
        self.instability_bound = instability_bound
        self.exponents = tuple(hierarchy_exponents(model))
        self.indices = tuple(enumerate_indices(len(self.exponents), depth))
        self.generator = self._assemble()

        norm = float(scipy.sparse.linalg.norm(self.generator, 1))
        self.stable_step = 2.0 / norm if norm > 0.0 else math.inf

        LOGGER.info(
            "Assembled a hierarchy of %d ADOs (%d indices, depth %d) "
            "with %d non-zeros in the generator",
            len(self.indices),
            len(self.exponents),
            depth,
            self.generator.nnz,
        )

    @property
    def dim(self) -> int:
        """Give the dimension of the system."""
        return self.model.dim

    def _assemble(self) -> "scipy.sparse.csr_matrix":
        dim = self.model.dim
        count = len(self.indices)
        lookup = {index: position for position, index in enumerate(self.indices)}

        hamiltonian = self.model.h_sys
        liouvillian = -1.0j * (_left(hamiltonian) - _right(hamiltonian))

        damping = np.array(
            [
                sum(n * exponent.rate for n, exponent in zip(index, self.exponents))
                for index in self.indices
            ],
            dtype=np.complex128,
        )

        generator = scipy.sparse.kron(
            scipy.sparse.identity(count, dtype=np.complex128, format="csr"),
            liouvillian,
            format="csr",
        ) - scipy.sparse.kron(
            scipy.sparse.diags(damping, format="csr"),
            scipy.sparse.identity(dim * dim, dtype=np.complex128, format="csr"),
            format="csr",
        )

        for k, exponent in enumerate(self.exponents):
            operator = self.model.couplings[exponent.coupling].operator
            commutator = -1.0j * (_left(operator) - _right(operator))
            lowering = -1.0j * (
                exponent.amplitude * _left(operator)
                - exponent.conjugate_amplitude * _right(operator)
            )

            up_rows = []  # type: List[int]
            up_columns = []  # type: List[int]
            up_data = []  # type: List[float]
            down_rows = []  # type: List[int]
            down_columns = []  # type: List[int]
            down_data = []  # type: List[float]

            scale = exponent.scale
            for row, index in enumerate(self.indices):
                occupation = index[k]

                raised = index[:k] + (occupation + 1,) + index[k + 1 :]
                raised_position = lookup.get(raised, None)
                if raised_position is not None:
                    up_rows.append(row)
                    up_columns.append(raised_position)
                    up_data.append(
                        math.sqrt((occupation + 1) * scale) if self.scaled else 1.0
                    )

                if occupation > 0:
                    lowered = index[:k] + (occupation - 1,) + index[k + 1 :]
                    down_rows.append(row)
                    down_columns.append(lookup[lowered])
                    down_data.append(
                        math.sqrt(occupation / scale)
                        if self.scaled
                        else float(occupation)
                    )

            if len(up_rows) > 0:
                raising_structure = scipy.sparse.coo_matrix(
                    (up_data, (up_rows, up_columns)), shape=(count, count)
                )
                generator = generator + scipy.sparse.kron(
                    raising_structure, commutator, format="csr"
                )

            if len(down_rows) > 0:
                lowering_structure = scipy.sparse.coo_matrix(
                    (down_data, (down_rows, down_columns)), shape=(count, count)
                )
                generator = generator + scipy.sparse.kron(
                    lowering_structure, lowering, format="csr"
                )

        return scipy.sparse.csr_matrix(generator, dtype=np.complex128)

    def matches(self, state: HierarchyState) -> bool:
        """Check that ``state`` belongs to this hierarchy."""
        return (
            state.dim == self.dim
            and state.depth == self.depth
            and state.scaled == self.scaled
            and state.exponents == self.exponents
        )

    @require(lambda self, rho: as_matrix(rho).shape == (self.dim, self.dim))
    def init_product_state(self, rho: MatrixLike) -> HierarchyState:
        """Encode ``ρ ⊗ exp(-βH_E)/Z_E``: the first ADO is ``rho``, others zero."""
        ados = np.zeros((len(self.indices), self.dim, self.dim), dtype=np.complex128)
        ados[0] = as_matrix(rho)
        return HierarchyState(
            dim=self.dim,
            depth=self.depth,
            exponents=self.exponents,
            indices=self.indices,
            ados=ados,
            scaled=self.scaled,
        )

    def _step(self, vector: ComplexArray, step: float) -> ComplexArray:
        generator = self.generator
        k1 = generator @ vector
        k2 = generator @ (vector + (0.5 * step) * k1)
        k3 = generator @ (vector + (0.5 * step) * k2)
        k4 = generator @ (vector + step * k3)
        return np.asarray(
            vector + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4),
            dtype=np.complex128,
        )

    def _max_ado_norm(self, vector: ComplexArray) -> float:
        blocks = vector.reshape(len(self.indices), self.dim * self.dim)
        return float(np.max(np.linalg.norm(blocks, axis=1)))

    def _check_stability(self, vector: ComplexArray, time: float) -> None:
        norm = self._max_ado_norm(vector)
        if not math.isfinite(norm) or norm > self.instability_bound:
            raise NumericalInstabilityError(
                f"An ADO norm reached {norm:.3e} at t={time:g}, beyond "
                f"{self.instability_bound:.1e}; use a smaller time step "
                f"(more substeps) or a deeper hierarchy",
                time=time,
            )

    @require(lambda self, state: self.matches(state), "State of this hierarchy")
    @require(lambda times: is_uniform_grid(np.asarray(times, dtype=np.float64)))
    @require(lambda times: len(times) >= 1)
    @ensure(lambda times, result: len(result[0]) == len(times))
    def propagate(
        self, state: HierarchyState, times: npt.ArrayLike
    ) -> Tuple[Trajectory, HierarchyState]:
        """
        Propagate ``state`` given at ``times[0]`` over the grid ``times``.

        Return the trajectory of the first ADO and the final full state.
        """
        times_array = np.asarray(times, dtype=np.float64)
        vector = _to_vector(state.ados)
        values = np.empty((len(times_array), self.dim, self.dim), dtype=np.complex128)
        values[0] = state.ados[0]

        if len(times_array) >= 2:
            step = float(times_array[1] - times_array[0]) / self.substeps
            if step > self.stable_step:
                LOGGER.warning(
                    "The Runge-Kutta step %g exceeds the stable step %g of the "
                    "hierarchy; expect an instability",
                    step,
                    self.stable_step,
                )

            for position in range(1, len(times_array)):
                for _ in range(self.substeps):
                    vector = self._step(vector, step)
                self._check_stability(vector, float(times_array[position]))
                values[position] = vector[: self.dim * self.dim].reshape(
                    (self.dim, self.dim), order="F"
                )

        elapsed = float(times_array[-1] - times_array[0])
        final = HierarchyState(
            dim=self.dim,
            depth=self.depth,
            exponents=self.exponents,
            indices=self.indices,
            ados=_from_vector(vector, len(self.indices), self.dim),
            time=state.time + elapsed,
            scaled=self.scaled,
        )
        return Trajectory(times=times_array, values=values), final

    @require(lambda self, state: self.matches(state), "State of this hierarchy")
    def derivative_norm(self, state: HierarchyState) -> float:
        """Give the largest Frobenius norm of the time derivatives of the ADOs."""
        return self._max_ado_norm(self.generator @ _to_vector(state.ados))

    @require(lambda self, seed: self.matches(seed), "State of this hierarchy")
    @require(lambda tol: tol > 0.0)
    @require(lambda t_max: t_max >= 0.0)
    @require(lambda chunk: chunk > 0.0)
    @ensure(lambda self, tol, result: self.derivative_norm(result) < tol)
    def relax_to_stationary(
        self,
        seed: HierarchyState,
        tol: float,
        t_max: float,
        chunk: float = DEFAULT_RELAXATION_CHUNK,
    ) -> HierarchyState:
        """
        Propagate ``seed`` until the hierarchy becomes stationary.

        Stationarity is checked every ``chunk`` of time. The subspace the
        seed lives in is preserved by the dynamics, so a seed supported on
        the excited manifold relaxes to the correlated equilibrium within it.

        :raise: :py:class:`ConvergenceError` if ``tol`` is not reached
            by ``t_max``
        """
        step = min(chunk / self.substeps, RELAXATION_SAFETY * self.stable_step)
        steps_per_chunk = max(1, int(math.ceil(chunk / step)))
        step = chunk / steps_per_chunk

        vector = _to_vector(seed.ados)
        elapsed = 0.0
        while True:
            norm = self._max_ado_norm(self.generator @ vector)
            LOGGER.debug(
                "Relaxation at t=%g: the derivative norm is %.3e", elapsed, norm
            )
            if norm < tol:
                break

            if elapsed >= t_max:
                raise ConvergenceError(
                    f"The hierarchy did not become stationary "
                    f"within t_max={t_max:g}: "
                    f"the derivative norm is {norm:.3e}, but {tol:.3e} is required",
                    derivative_norm=norm,
                )

            for _ in range(steps_per_chunk):
                vector = self._step(vector, step)
            elapsed += chunk
            self._check_stability(vector, seed.time + elapsed)

        LOGGER.info("The hierarchy became stationary after t=%g", elapsed)

        return HierarchyState(
            dim=self.dim,
            depth=self.depth,
            exponents=self.exponents,
            indices=self.indices,
            ados=_from_vector(vector, len(self.indices), self.dim),
            time=seed.time + elapsed,
            scaled=self.scaled,
        )

    def product_sampler(
        self, times: npt.ArrayLike
    ) -> Callable[[ComplexArray], Trajectory]:
        """Give the sampler of the reduced dynamics from product initial states."""
        times_array = np.array(times, dtype=np.float64)

        def sample(initial: ComplexArray) -> Trajectory:
            state = self.init_product_state(initial)
            trajectory, _ = self.propagate(state, times_array)
            return trajectory

        return sample


@functools.lru_cache(maxsize=16)
def propagator_for(
    model: HamiltonianModel,
    depth: int,
    scaled: bool = False,
    substeps: int = DEFAULT_SUBSTEPS,
) -> HierarchyPropagator:
    """Give the (cached) propagator of the hierarchy of ``model``."""
    return HierarchyPropagator(
        model=model, depth=depth, scaled=scaled, substeps=substeps
    )


@require(lambda rho, model: as_matrix(rho).shape == (model.dim, model.dim))
@require(lambda depth: depth >= 1)
@ensure(lambda result: result.indices[0] == tuple([0] * len(result.exponents)))
def init_product_state(
    rho: MatrixLike, model: HamiltonianModel, depth: int, scaled: bool = False
) -> HierarchyState:
    """Encode the product state ``ρ ⊗ exp(-βH_E)/Z_E`` in the hierarchy."""
    exponents = hierarchy_exponents(model)
    indices = enumerate_indices(len(exponents), depth)
    ados = np.zeros((len(indices), model.dim, model.dim), dtype=np.complex128)
    ados[0] = as_matrix(rho)
    return HierarchyState(
        dim=model.dim,
        depth=depth,
        exponents=exponents,
        indices=indices,
        ados=ados,
        scaled=scaled,
    )


@require(
    lambda model, state: tuple(hierarchy_exponents(model)) == state.exponents,
    "Hierarchy of the model",
)
def propagate(
    model: HamiltonianModel,
    state: HierarchyState,
    times: npt.ArrayLike,
    substeps: int = DEFAULT_SUBSTEPS,
) -> Tuple[Trajectory, HierarchyState]:
    """Propagate ``state``; see :py:meth:`HierarchyPropagator.propagate`."""
    propagator = propagator_for(model, state.depth, state.scaled, substeps)
    return propagator.propagate(state, times)


@require(
    lambda model, seed: tuple(hierarchy_exponents(model)) == seed.exponents,
    "Hierarchy of the model",
)
def relax_to_stationary(
    model: HamiltonianModel,
    seed: HierarchyState,
    tol: float,
    t_max: float,
    chunk: float = DEFAULT_RELAXATION_CHUNK,
) -> HierarchyState:
    """Relax ``seed``; see :py:meth:`HierarchyPropagator.relax_to_stationary`."""
    propagator = propagator_for(model, seed.depth, seed.scaled)
    return propagator.relax_to_stationary(seed, tol=tol, t_max=t_max, chunk=chunk)


@require(lambda state, left: left.shape == (state.dim, state.dim))
@require(lambda state, right: right.shape == (state.dim, state.dim))
def apply_system_operator(
    state: HierarchyState,
    left: ComplexArray,
    right: ComplexArray,
    normalize: bool = False,
) -> HierarchyState:
    """
    Replace every ADO ``ρ_n`` with ``left · ρ_n · right†``.

    If ``normalize`` is set, all the ADOs are divided by the trace of the
    new first ADO.
    """
    ados = np.einsum("ij,njk,lk->nil", left, state.ados, right.conj())
    if normalize:
        trace = np.trace(ados[0])
        if abs(trace) == 0.0:
            raise ValueError("The operator annihilates the state; can not normalize")
        ados = ados / trace

    return state.with_ados(ados)


@require(lambda state, preparation: preparation.dim == state.dim)
def apply_preparation(
    state: HierarchyState, preparation: PreparativeMap
) -> HierarchyState:
    """Apply the Kraus operators of ``preparation`` to every ADO."""
    ados = np.zeros_like(state.ados)
    for operator in preparation.kraus:
        ados = ados + np.einsum(
            "ij,njk,lk->nil", operator, state.ados, operator.conj()
        )

    if preparation.normalize:
        trace = np.trace(ados[0])
        if abs(trace) == 0.0:
            raise ValueError(
                "The preparation annihilates the state; can not normalize"
            )
        ados = ados / trace

    return state.with_ados(ados)


def reduced_state(state: HierarchyState) -> ReducedOperator:
    """Give a copy of the first ADO, the reduced operator of the system."""
    return ReducedOperator(state.ados[0])


# region Checkpoints

_HEADER_LENGTH = struct.Struct("<Q")


def _exponent_to_jsonable(exponent: HierarchyExponent) -> MutableMapping[str, Any]:
    return {
        "coupling": exponent.coupling,
        "nu_re": exponent.rate.real,
        "nu_im": exponent.rate.imag,
        "a_re": exponent.amplitude.real,
        "a_im": exponent.amplitude.imag,
        "b_re": exponent.conjugate_amplitude.real,
        "b_im": exponent.conjugate_amplitude.imag,
    }


def _exponent_from_jsonable(jsonable: Mapping[str, Any]) -> HierarchyExponent:
    return HierarchyExponent(
        coupling=int(jsonable["coupling"]),
        rate=complex(jsonable["nu_re"], jsonable["nu_im"]),
        amplitude=complex(jsonable["a_re"], jsonable["a_im"]),
        conjugate_amplitude=complex(jsonable["b_re"], jsonable["b_im"]),
    )


def save_checkpoint(state: HierarchyState, path: pathlib.Path) -> None:
    """
    Write ``state`` to ``path``.

    The file starts with the length of the JSON header as an unsigned 64-bit
    little-endian integer, followed by the header and the ADO entries as
    little-endian complex doubles, ADO by ADO in lexicographic multi-index
    order and row-major within an ADO.
    """
    header = {
        "dim": state.dim,
        "L": state.depth,
        "M": len(state.exponents),
        "bath_meta": [_exponent_to_jsonable(exponent) for exponent in state.exponents],
        "t": state.time,
        "scaled": state.scaled,
        "n_ados": len(state.indices),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    with path.open("wb") as fid:
        fid.write(_HEADER_LENGTH.pack(len(header_bytes)))
        fid.write(header_bytes)
        fid.write(np.ascontiguousarray(state.ados, dtype="<c16").tobytes(order="C"))


def load_checkpoint(
    path: pathlib.Path,
) -> Tuple[Optional[HierarchyState], Optional[str]]:
    """Read the state written by :py:func:`save_checkpoint`."""
    data = path.read_bytes()
    if len(data) < _HEADER_LENGTH.size:
        return None, f"The checkpoint {path} is truncated"

    (header_length,) = _HEADER_LENGTH.unpack_from(data, 0)
    start = _HEADER_LENGTH.size
    try:
        header = json.loads(data[start : start + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exception:
        return None, f"The header of the checkpoint {path} is invalid: {exception}"

    dim = int(header["dim"])
    depth = int(header["L"])
    exponents = [_exponent_from_jsonable(item) for item in header["bath_meta"]]
    if len(exponents) != int(header["M"]):
        return None, (
            f"The checkpoint {path} declares M={header['M']}, "
            f"but lists {len(exponents)} exponents"
        )

    indices = enumerate_indices(len(exponents), depth)
    if (len(data) - start - header_length) % 16 != 0:
        return None, f"The payload of the checkpoint {path} is not complex doubles"

    payload = np.frombuffer(data, dtype="<c16", offset=start + header_length)
    expected = len(indices) * dim * dim
    if payload.size != expected or int(header["n_ados"]) != len(indices):
        return None, (
            f"The checkpoint {path} holds {payload.size} entries, "
            f"but {expected} are expected for {len(indices)} ADOs of dimension {dim}"
        )

    return (
        HierarchyState(
            dim=dim,
            depth=depth,
            exponents=exponents,
            indices=indices,
            ados=payload.astype(np.complex128).reshape(len(indices), dim, dim),
            time=float(header["t"]),
            scaled=bool(header["scaled"]),
        ),
        None,
    )


# endregion


def relaxation_grid(duration: float, dt: float) -> RealArray:
    """Give the uniform grid covering ``duration`` with spacing ``dt``."""
    return make_time_grid(dt, steps_in(duration, dt))
