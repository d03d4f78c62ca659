"""
Provide the ground truths: exact diagonalization over a discretized bath and
the closed-form solutions of the pure-dephasing and uncoupled-exciton cases.

The discretized environment is ``H_E = Σ_k ω_k a_k† a_k`` and every coupling
operator ``Q_c`` of the model couples to ``X_c = Σ_k γ_k (a_k† + a_k)`` over
the modes of its own bath, so that ``Σ_k γ_k² ≈ ∫ J(ω) dω`` bin by bin.
"""
import enum
import logging
from typing import Callable, Final, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.integrate
import scipy.linalg
from icontract import DBC, ensure, invariant, require

from kernelforge import bath as bath_module
from kernelforge.common import (
    ComplexArray,
    OracleError,
    RealArray,
    assert_never,
    is_uniform_grid,
)
from kernelforge.models import (
    BathFamily,
    BathSpec,
    HamiltonianModel,
    ModelKind,
    PreparationKind,
    PreparativeMap,
    excited_projector,
)
from kernelforge.operators import (
    CorrelationKind,
    MatrixLike,
    Trajectory,
    as_matrix,
)
from kernelforge.spectra import CorrelationSamplers

LOGGER = logging.getLogger(__name__)

#: Largest Hilbert dimension of system and discretized bath together
DEFAULT_DIM_CAP: Final = 20000

#: Largest thermal occupation of the highest Fock level of any mode
FOCK_TAIL_TOL: Final = 1e-2

#: Largest fraction of the coupling weight beyond the highest frequency
DISCRETIZATION_TAIL_TOL: Final = 5e-2

#: Number of Fock levels per mode if not specified otherwise
DEFAULT_FOCK_CUTOFF: Final = 4


# fmt: off
@invariant(lambda self: len(self.frequencies) >= 1)
@invariant(lambda self: self.frequencies.shape == self.gammas.shape)
@invariant(lambda self: bool(np.all(self.frequencies > 0.0)))
@invariant(
    lambda self: bool(np.all(np.diff(self.frequencies) > 0.0)),
    "Strictly increasing frequencies"
)
@invariant(lambda self: self.fock_cutoff >= 2)
# fmt: on
class DiscretizedBath(DBC):
    """Represent a finite set of harmonic modes standing in for a continuum."""

    #: Mode frequencies ``ω_k`` in units of ε
    frequencies: Final[RealArray]

    #: Couplings ``γ_k`` of the modes to the system operator
    gammas: Final[RealArray]

    #: Number of Fock levels kept per mode
    fock_cutoff: Final[int]

    def __init__(
        self, frequencies: npt.ArrayLike, gammas: npt.ArrayLike, fock_cutoff: int
    ) -> None:
        """Initialize with copies of the given arrays."""
        self.frequencies = np.array(frequencies, dtype=np.float64)
        self.gammas = np.array(gammas, dtype=np.float64)
        self.frequencies.setflags(write=False)
        self.gammas.setflags(write=False)
        self.fock_cutoff = fock_cutoff

    @property
    def n_modes(self) -> int:
        """Give the number of modes."""
        return len(self.frequencies)


def _coupling_weight(spec: BathSpec) -> Tuple[Callable[[float], float], float]:
    """Give the density whose tail is checked and its total integral."""
    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        # ∫ J dω diverges for this family; its reorganization integral does not.
        return (
            lambda omega: float(bath_module.spectral_density(spec, omega)) / omega,
            bath_module.reorganization_energy(spec),
        )

    if spec.family is BathFamily.OHMIC_EXP:
        return (
            lambda omega: float(bath_module.spectral_density(spec, omega)),
            spec.lam * spec.omega_c**2,
        )

    assert_never(spec.family)


def _integral(function: Callable[[float], float], lower: float, upper: float) -> float:
    value, _ = scipy.integrate.quad(function, lower, upper, limit=200)
    return float(value)


@require(lambda n_modes: n_modes >= 1)
@require(lambda omega_max: omega_max > 0.0)
@require(lambda fock_cutoff: fock_cutoff >= 2)
@ensure(lambda n_modes, result: result.n_modes == n_modes)
def discretize_bath(
    spec: BathSpec,
    n_modes: int,
    omega_max: float,
    fock_cutoff: int = DEFAULT_FOCK_CUTOFF,
) -> DiscretizedBath:
    """
    Split ``(0, omega_max]`` into equal bins, one mode at the middle of each.

    The squared coupling of a mode is ``∫_bin J(ω) dω``.

    :raise: :py:class:`OracleError` if more than 5 % of the coupling weight
        lies beyond ``omega_max``
    """
    weight, total = _coupling_weight(spec)
    captured = _integral(weight, 0.0, omega_max)
    tail = 1.0 - captured / total
    if tail > DISCRETIZATION_TAIL_TOL:
        raise OracleError(
            f"The discretization up to omega_max={omega_max:g} misses "
            f"{100.0 * tail:.1f}% of the coupling weight; "
            f"at most {100.0 * DISCRETIZATION_TAIL_TOL:.0f}% is allowed, "
            f"increase omega_max"
        )

    edges = np.linspace(0.0, omega_max, n_modes + 1)
    frequencies = 0.5 * (edges[:-1] + edges[1:])

    def density(omega: float) -> float:
        return float(bath_module.spectral_density(spec, omega))

    gammas = np.sqrt(
        [
            _integral(density, float(lower), float(upper))
            for lower, upper in zip(edges[:-1], edges[1:])
        ]
    )

    return DiscretizedBath(
        frequencies=frequencies, gammas=gammas, fock_cutoff=fock_cutoff
    )


class EvolutionMode(enum.Enum):
    """Distinguish how the prepared global operator is evolved."""

    #: ``exp(-iHt) X exp(iHt)``
    TWO_SIDED = "two_sided"

    #: ``exp(iHt) X exp(-i H_E t)``, the form of the reduced emission operator
    ONE_SIDED_RIGHT_BATH = "one_sided_right_bath"


def _annihilation(fock_cutoff: int) -> RealArray:
    return np.diag(np.sqrt(np.arange(1, fock_cutoff, dtype=np.float64)), k=1)


def _embed_mode(local: RealArray, position: int, count: int) -> RealArray:
    """Embed the single-mode ``local`` operator among ``count`` modes."""
    size = local.shape[0]
    left = np.eye(size**position)
    right = np.eye(size ** (count - position - 1))
    return np.asarray(np.kron(np.kron(left, local), right), dtype=np.float64)


class ExactOracle:
    """
    Diagonalize the system with its discretized baths once and evolve exactly.

    The basis of the total Hilbert space is ``system ⊗ mode_1 ⊗ mode_2 ⊗ ...``
    with the modes of the first coupling coming first.
    """

    model: Final[HamiltonianModel]
    baths: Final[Tuple[DiscretizedBath, ...]]

    #: Dimension of the discretized environment
    env_dim: Final[int]

    #: Eigenvalues of the total Hamiltonian
    energies: Final[RealArray]

    #: Eigenvectors of the total Hamiltonian as columns
    vectors: Final[ComplexArray]

    #: Energies of the product Fock states of the environment
    bath_energies: Final[RealArray]

    beta: Final[float]

    @require(
        lambda model, baths: isinstance(baths, DiscretizedBath)
        or len(baths) == len(model.couplings),
        "One discretized bath per coupling, or a single shared one",
    )
    @require(lambda model: len(model.couplings) >= 1)
    def __init__(
        self,
        model: HamiltonianModel,
        baths: Union[DiscretizedBath, Sequence[DiscretizedBath]],
        dim_cap: int = DEFAULT_DIM_CAP,
        fock_tail_tol: float = FOCK_TAIL_TOL,
    ) -> None:
        """
        Assemble and diagonalize the total Hamiltonian.

        :raise: :py:class:`OracleError` if the dimension exceeds ``dim_cap`` or
            the thermal state populates the highest Fock level of any mode
            above ``fock_tail_tol``
        """
        if isinstance(baths, DiscretizedBath):
            self.baths = tuple(baths for _ in model.couplings)
        else:
            self.baths = tuple(baths)

        cutoffs = {discretized.fock_cutoff for discretized in self.baths}
        if len(cutoffs) != 1:
            raise OracleError(
                "Expected a uniform Fock cutoff across the baths, "
                f"got {sorted(cutoffs)}"
            )
        fock_cutoff = cutoffs.pop()

        frequencies = []  # type: List[float]
        for discretized in self.baths:
            frequencies.extend(float(omega) for omega in discretized.frequencies)
        mode_count = len(frequencies)

        dim = model.dim
        total_dim = dim * fock_cutoff**mode_count
        if total_dim > dim_cap:
            raise OracleError(
                f"The total Hilbert dimension {total_dim} "
                f"({dim} × {fock_cutoff}^{mode_count}) exceeds the cap {dim_cap}; "
                f"use fewer modes or a smaller Fock cutoff"
            )

        self.model = model
        self.env_dim = fock_cutoff**mode_count
        self._fock_cutoff = fock_cutoff
        self._mode_count = mode_count

        bath_energies = np.zeros(1, dtype=np.float64)
        for omega in frequencies:
            bath_energies = np.add.outer(
                bath_energies, omega * np.arange(fock_cutoff, dtype=np.float64)
            ).ravel()
        self.bath_energies = bath_energies

        hamiltonian = np.kron(model.h_sys, np.eye(self.env_dim)) + np.kron(
            np.eye(dim), np.diag(bath_energies)
        )

        displacement = _annihilation(fock_cutoff)
        displacement = displacement + displacement.T
        position = 0
        for coupling, discretized in zip(model.couplings, self.baths):
            environment_operator = np.zeros((self.env_dim, self.env_dim))
            for gamma in discretized.gammas:
                environment_operator += gamma * _embed_mode(
                    displacement, position, mode_count
                )
                position += 1
            hamiltonian = hamiltonian + np.kron(coupling.operator, environment_operator)

        LOGGER.info(
            "Diagonalizing the total Hamiltonian of dimension %d (%d modes)",
            total_dim,
            mode_count,
        )
        energies, vectors = scipy.linalg.eigh(hamiltonian)
        self.energies = np.asarray(energies, dtype=np.float64)
        self.vectors = np.asarray(vectors, dtype=np.complex128)

        self.beta = model.common_beta()
        shifted = -self.beta * (self.energies - self.energies[0])
        weights = np.exp(shifted)
        self._thermal_weights = weights / np.sum(weights)

        self._check_fock_tail(fock_tail_tol)

    def _check_fock_tail(self, tolerance: float) -> None:
        populations = (np.abs(self.vectors) ** 2) @ self._thermal_weights
        shape = (self.model.dim,) + (self._fock_cutoff,) * self._mode_count
        populations = populations.reshape(shape)
        for mode in range(self._mode_count):
            axes = tuple(axis for axis in range(len(shape)) if axis != mode + 1)
            occupation = float(np.sum(populations, axis=axes)[-1])
            if occupation > tolerance:
                raise OracleError(
                    f"The thermal state occupies the highest Fock level of "
                    f"mode {mode} with {occupation:.3e} > {tolerance:.1e}; "
                    f"increase the Fock cutoff"
                )

    @property
    def total_dim(self) -> int:
        """Give the dimension of the total Hilbert space."""
        return int(self.energies.shape[0])

    def thermal_state(self) -> ComplexArray:
        """Compute the global thermal state ``exp(-βH)/Z``."""
        return np.asarray(
            (self.vectors * self._thermal_weights) @ self.vectors.conj().T,
            dtype=np.complex128,
        )

    def bath_thermal_state(self) -> ComplexArray:
        """Compute ``exp(-βH_E)/Z_E`` on the truncated Fock space."""
        weights = np.exp(-self.beta * (self.bath_energies - self.bath_energies[0]))
        return np.diag(weights / np.sum(weights)).astype(np.complex128)

    def partial_trace(self, operator: ComplexArray) -> ComplexArray:
        """Trace out the environment of a total-space ``operator``."""
        dim = self.model.dim
        return np.asarray(
            np.einsum(
                "iaja->ij", operator.reshape(dim, self.env_dim, dim, self.env_dim)
            ),
            dtype=np.complex128,
        )

    @require(lambda self, preparation: preparation.dim == self.model.dim)
    def prepared_state(
        self,
        preparation: PreparativeMap,
        left: Optional[ComplexArray] = None,
        right: Optional[ComplexArray] = None,
    ) -> ComplexArray:
        """
        Apply ``preparation`` to the global thermal state.

        The result is further mapped to ``left · X · right†`` if the system
        operators are given.
        """
        thermal = self.thermal_state()
        identity = np.eye(self.env_dim)

        prepared = np.zeros_like(thermal)
        for operator in preparation.kraus:
            lifted = np.kron(operator, identity)
            prepared = prepared + lifted @ thermal @ lifted.conj().T

        if preparation.normalize:
            trace = np.trace(prepared).real
            if trace <= 0.0:
                raise ValueError("The preparation annihilates the thermal state")
            prepared = prepared / trace

        if left is not None:
            prepared = np.kron(left, identity) @ prepared
        if right is not None:
            prepared = prepared @ np.kron(right, identity).conj().T

        return np.asarray(prepared, dtype=np.complex128)

    @require(lambda self, rho: as_matrix(rho).shape == self.model.h_sys.shape)
    def product_state(self, rho: MatrixLike) -> ComplexArray:
        """Lift ``rho`` to ``rho ⊗ exp(-βH_E)/Z_E``."""
        return np.asarray(
            np.kron(as_matrix(rho), self.bath_thermal_state()), dtype=np.complex128
        )

    @require(lambda self, initial: initial.shape == (self.total_dim, self.total_dim))
    @require(lambda times: is_uniform_grid(np.asarray(times, dtype=np.float64)))
    def evolve(
        self,
        initial: ComplexArray,
        times: npt.ArrayLike,
        mode: EvolutionMode = EvolutionMode.TWO_SIDED,
    ) -> Trajectory:
        """Evolve the global ``initial`` operator and trace out the environment."""
        times_array = np.asarray(times, dtype=np.float64)
        dim = self.model.dim
        vectors = self.vectors
        transformed = vectors.conj().T @ initial

        values = np.empty((len(times_array), dim, dim), dtype=np.complex128)

        if mode is EvolutionMode.TWO_SIDED:
            transformed = transformed @ vectors
            for position, t in enumerate(times_array):
                evolved_vectors = vectors * np.exp(-1.0j * self.energies * t)
                left = (evolved_vectors @ transformed).reshape(
                    dim, self.env_dim, self.total_dim
                )
                values[position] = np.einsum(
                    "ian,jan->ij",
                    left,
                    evolved_vectors.conj().reshape(dim, self.env_dim, self.total_dim),
                )

        elif mode is EvolutionMode.ONE_SIDED_RIGHT_BATH:
            for position, t in enumerate(times_array):
                evolved_vectors = vectors * np.exp(1.0j * self.energies * t)
                left = (evolved_vectors @ transformed).reshape(
                    dim, self.env_dim, dim, self.env_dim
                )
                values[position] = np.einsum(
                    "iaja,a->ij", left, np.exp(-1.0j * self.bath_energies * t)
                )

        else:
            assert_never(mode)

        return Trajectory(times=times_array, values=values)

    def product_sampler(
        self, times: npt.ArrayLike
    ) -> Callable[[ComplexArray], Trajectory]:
        """Give the sampler of the reduced dynamics from product initial states."""
        times_array = np.array(times, dtype=np.float64)

        def sample(initial: ComplexArray) -> Trajectory:
            return self.evolve(self.product_state(initial), times_array)

        return sample

    @require(
        lambda self: self.model.ground is not None,
        "Model with a ground level is expected",
    )
    def correlation_samplers(self, times: npt.ArrayLike) -> CorrelationSamplers:
        """
        Give the samplers of the coherence block of a model with a ground level.

        The emission sampler starts from the correlated equilibrium within the
        excited manifold, right-multiplied by the adjoint of its argument.
        """
        times_array = np.array(times, dtype=np.float64)
        projector = excited_projector(self.model)
        preparation = PreparativeMap(
            kraus=[projector], kind=PreparationKind.PROJECTOR, normalize=True
        )
        identity = np.eye(self.model.dim, dtype=np.complex128)

        def emission(right: ComplexArray) -> Trajectory:
            initial = self.prepared_state(preparation, left=identity, right=right)
            return self.evolve(initial, times_array)

        return CorrelationSamplers(
            product=self.product_sampler(times_array), emission=emission
        )


@require(lambda model, preparation: preparation.dim == model.dim)
@require(lambda times: is_uniform_grid(np.asarray(times, dtype=np.float64)))
def exact_thermal_evolve(
    model: HamiltonianModel,
    bath: Union[DiscretizedBath, Sequence[DiscretizedBath]],
    preparation: PreparativeMap,
    times: npt.ArrayLike,
    mode: EvolutionMode = EvolutionMode.TWO_SIDED,
    left: Optional[ComplexArray] = None,
    right: Optional[ComplexArray] = None,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> Trajectory:
    """
    Prepare ``R exp(-βH) R†`` over the discretized ``bath`` and evolve it.

    See :py:meth:`ExactOracle.prepared_state` for ``left`` and ``right``.
    """
    oracle = ExactOracle(model=model, baths=bath, dim_cap=dim_cap)
    initial = oracle.prepared_state(preparation, left=left, right=right)
    return oracle.evolve(initial, times, mode=mode)


# region Closed forms


def dephasing_coherence_samples(
    eps: float, spec: BathSpec, coh0: complex, times: npt.ArrayLike
) -> ComplexArray:
    """Evaluate :py:func:`analytic_dephasing_coherence` at every time point."""
    times_array = np.asarray(times, dtype=np.float64)
    lineshape = bath_module.lineshape_samples(spec, times_array)
    return np.asarray(
        coh0 * np.exp(-1.0j * eps * times_array - 4.0 * lineshape.real),
        dtype=np.complex128,
    )


@require(lambda t: t >= 0.0)
@ensure(lambda coh0, result: abs(result) <= abs(coh0) * (1.0 + 1e-12))
def analytic_dephasing_coherence(
    eps: float, spec: BathSpec, coh0: complex, t: float
) -> complex:
    """
    Compute ``⟨↑|ρ(t)|↓⟩`` of the pure-dephasing model from a product state.

    The coupling ``σ_z`` splits the two branches by twice the bath
    displacement, hence the factor four in ``exp(-4 Re g(t))``.
    """
    return complex(dephasing_coherence_samples(eps, spec, coh0, [t])[0])


@require(
    lambda times: bool(np.all(np.asarray(times) >= 0.0)), "Non-negative times"
)
def monomer_correlation_samples(
    eps: float,
    spec: BathSpec,
    kind: CorrelationKind,
    times: npt.ArrayLike,
    lineshape: Optional[ComplexArray] = None,
) -> ComplexArray:
    """
    Evaluate :py:func:`analytic_monomer_correlation` at every time point.

    The ``lineshape`` samples are computed unless given.
    """
    times_array = np.asarray(times, dtype=np.float64)
    if lineshape is None:
        lineshape = bath_module.lineshape_samples(spec, times_array)
    assert lineshape.shape == times_array.shape

    if kind is CorrelationKind.ABSORPTION:
        return np.asarray(
            np.exp(-1.0j * eps * times_array - lineshape), dtype=np.complex128
        )

    if kind is CorrelationKind.EMISSION:
        shifted = eps - 2.0 * bath_module.reorganization_energy(spec)
        return np.asarray(
            np.exp(1.0j * shifted * times_array - lineshape), dtype=np.complex128
        )

    assert_never(kind)


@require(lambda t: t >= 0.0)
def analytic_monomer_correlation(
    eps: float, spec: BathSpec, kind: CorrelationKind, t: float
) -> complex:
    """
    Compute the dipole correlation function of a single excited level.

    Absorption is ``exp(-iεt - g(t))``. Emission starts from the displaced
    equilibrium of the excited level and evolves forward on the excited side,
    ``exp(i(ε - 2λ_R)t - g(t))``, with the reorganization energy ``λ_R``.
    """
    return complex(monomer_correlation_samples(eps, spec, kind, [t])[0])


@require(lambda beta: beta > 0.0)
@require(lambda energies: len(energies) >= 1)
@ensure(lambda result: abs(float(np.sum(result)) - 1.0) <= 1e-12)
def excited_populations(
    energies: Sequence[float], specs: Sequence[BathSpec], beta: float
) -> RealArray:
    """
    Compute the equilibrium populations of uncoupled excited levels.

    A level displaced by its own bath has the free energy ``ε_i - λ_R,i``.
    """
    assert len(energies) == len(specs)
    free_energies = np.array(
        [
            energy - bath_module.reorganization_energy(spec)
            for energy, spec in zip(energies, specs)
        ],
        dtype=np.float64,
    )
    weights = np.exp(-beta * (free_energies - np.min(free_energies)))
    return np.asarray(weights / np.sum(weights), dtype=np.float64)


def aggregate_correlation_samples(
    energies: Sequence[float],
    spec: BathSpec,
    kind: CorrelationKind,
    beta: float,
    times: npt.ArrayLike,
) -> ComplexArray:
    """Evaluate :py:func:`analytic_aggregate_correlation` at every time point."""
    times_array = np.asarray(times, dtype=np.float64)
    lineshape = bath_module.lineshape_samples(spec, times_array)

    if kind is CorrelationKind.ABSORPTION:
        weights = np.ones(len(energies), dtype=np.float64)
    elif kind is CorrelationKind.EMISSION:
        weights = excited_populations(energies, [spec] * len(energies), beta)
    else:
        assert_never(kind)

    result = np.zeros(times_array.shape, dtype=np.complex128)
    for weight, energy in zip(weights, energies):
        result += weight * monomer_correlation_samples(
            energy, spec, kind, times_array, lineshape=lineshape
        )
    return result


@require(lambda t: t >= 0.0)
def analytic_aggregate_correlation(
    energies: Sequence[float],
    spec: BathSpec,
    kind: CorrelationKind,
    beta: float,
    t: float,
) -> complex:
    """
    Compute the correlation function of uncoupled levels with unit dipoles.

    Every level has its own copy of the bath ``spec``. Absorption sums the
    monomer functions, emission weights them by the excited populations.
    """
    return complex(aggregate_correlation_samples(energies, spec, kind, beta, [t])[0])


def _is_uncoupled_chromophoric(model: HamiltonianModel) -> bool:
    if model.kind is not ModelKind.CHROMOPHORIC or model.ground is None:
        return False

    off_diagonal = model.h_sys - np.diag(np.diag(model.h_sys))
    return bool(np.all(off_diagonal == 0.0))


@require(
    lambda model: _is_uncoupled_chromophoric(model),
    "Chromophoric model without electronic couplings",
)
@require(lambda times: is_uniform_grid(np.asarray(times, dtype=np.float64)))
def analytic_block_samplers(
    model: HamiltonianModel, times: npt.ArrayLike
) -> CorrelationSamplers:
    """
    Give exact samplers of the coherence block of uncoupled excited levels.

    Without electronic couplings every coherence ``|e_i⟩⟨g|`` evolves on its
    own. From a product state it picks up the monomer absorption function;
    from the correlated excited equilibrium ``ρ^e`` right-multiplied by
    ``|e_i⟩⟨g|`` it becomes ``p_i`` times the conjugated monomer emission
    function.
    """
    assert model.ground is not None
    times_array = np.array(times, dtype=np.float64)
    ground = model.ground
    excited = model.excited_indices()
    energies = [float(model.h_sys[index, index].real) for index in excited]
    specs = [coupling.bath for coupling in model.couplings]

    absorption = []  # type: List[ComplexArray]
    emission = []  # type: List[ComplexArray]
    for energy, spec in zip(energies, specs):
        lineshape = bath_module.lineshape_samples(spec, times_array)
        absorption.append(
            monomer_correlation_samples(
                energy, spec, CorrelationKind.ABSORPTION, times_array, lineshape
            )
        )
        emission.append(
            monomer_correlation_samples(
                energy, spec, CorrelationKind.EMISSION, times_array, lineshape
            )
        )

    populations = excited_populations(energies, specs, model.common_beta())

    def product(initial: ComplexArray) -> Trajectory:
        values = np.zeros((len(times_array), model.dim, model.dim), dtype=np.complex128)
        for position, index in enumerate(excited):
            values[:, index, ground] = initial[index, ground] * absorption[position]
        return Trajectory(times=times_array, values=values)

    def emission_sampler(right: ComplexArray) -> Trajectory:
        values = np.zeros((len(times_array), model.dim, model.dim), dtype=np.complex128)
        for position, index in enumerate(excited):
            values[:, index, ground] = (
                np.conj(right[ground, index])
                * populations[position]
                * np.conj(emission[position])
            )
        return Trajectory(times=times_array, values=values)

    return CorrelationSamplers(product=product, emission=emission_sampler)


# endregion
