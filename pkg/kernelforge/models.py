"""
Build the Hamiltonians, baths, dipoles and preparations of the studied systems.

The energy unit ε is 1 throughout; all the parameters are given in units of ε
and the times in units of 1/ε.
"""
import enum
import math
from typing import (
    Any,
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
import scipy.linalg
from icontract import DBC, ensure, invariant, require

from kernelforge.common import (
    ComplexArray,
    HERMITICITY_TOL,
    assert_never,
    is_hermitian,
    is_square,
)
from kernelforge.operators import DensityMatrix, MatrixLike, as_matrix

#: Pauli matrices in the basis (|↑⟩, |↓⟩)
SIGMA_X: Final = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_Y: Final = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SIGMA_Z: Final = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


class BathFamily(enum.Enum):
    """List the supported spectral densities."""

    #: Drude-Lorentz density with the high-temperature kernel
    DRUDE_LORENTZ_HT = "drude_lorentz_ht"

    #: Ohmic density with an exponential cutoff
    OHMIC_EXP = "ohmic_exp"


class ExponentialTerm:
    """Represent ``amplitude · exp(-rate · t)`` of a correlation function."""

    amplitude: Final[complex]
    rate: Final[complex]

    @require(lambda rate: rate.real > 0.0, "Decaying term")
    def __init__(self, amplitude: complex, rate: complex) -> None:
        """Initialize with the given values."""
        self.amplitude = complex(amplitude)
        self.rate = complex(rate)

    def __call__(self, times: npt.ArrayLike) -> ComplexArray:
        """Evaluate the term at ``times``."""
        return np.asarray(
            self.amplitude * np.exp(-self.rate * np.asarray(times, dtype=np.float64)),
            dtype=np.complex128,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExponentialTerm):
            return NotImplemented

        return self.amplitude == other.amplitude and self.rate == other.rate

    def __hash__(self) -> int:
        return hash((self.amplitude, self.rate))

    def __repr__(self) -> str:
        return f"ExponentialTerm(amplitude={self.amplitude!r}, rate={self.rate!r})"


def drude_lorentz_term(lam: float, omega_c: float, beta: float) -> ExponentialTerm:
    """Give the single high-temperature term of the Drude-Lorentz kernel."""
    return ExponentialTerm(
        amplitude=lam * math.pi * complex(1.0 / beta, -omega_c / 2.0), rate=omega_c
    )


def _drude_expansion_is_closed_form(
    lam: float, omega_c: float, beta: float, expansion: Sequence[ExponentialTerm]
) -> bool:
    if len(expansion) != 1:
        return False

    expected = drude_lorentz_term(lam=lam, omega_c=omega_c, beta=beta)
    return (
        abs(expansion[0].amplitude - expected.amplitude)
        <= 1e-14 * abs(expected.amplitude)
        and abs(expansion[0].rate - expected.rate) <= 1e-14 * abs(expected.rate)
    )


# fmt: off
@invariant(lambda self: self.lam > 0.0)
@invariant(lambda self: self.omega_c > 0.0)
@invariant(lambda self: self.beta > 0.0)
@invariant(lambda self: len(self.expansion) >= 1)
@invariant(lambda self: self.residual >= 0.0)
@invariant(
    lambda self:
    self.family is not BathFamily.DRUDE_LORENTZ_HT
    or _drude_expansion_is_closed_form(
        self.lam, self.omega_c, self.beta, self.expansion
    ),
    "The Drude-Lorentz kernel is its single closed-form term"
)
# fmt: on
class BathSpec(DBC):
    """Specify a harmonic bath and the exponential expansion of its kernel."""

    family: Final[BathFamily]

    #: Coupling strength in units of ε
    lam: Final[float]

    #: Cutoff frequency in units of ε
    omega_c: Final[float]

    #: Inverse temperature in units of 1/ε
    beta: Final[float]

    #: Terms of the correlation function ``C(t) = Σ a_k exp(-ν_k t)``
    expansion: Final[Tuple[ExponentialTerm, ...]]

    #: Largest deviation of the expansion from ``C`` over the fit window
    residual: Final[float]

    #: End of the fit window; zero for closed-form expansions
    t_max: Final[float]

    def __init__(
        self,
        family: BathFamily,
        lam: float,
        omega_c: float,
        beta: float,
        expansion: Sequence[ExponentialTerm],
        residual: float = 0.0,
        t_max: float = 0.0,
    ) -> None:
        """Initialize with the given values."""
        self.family = family
        self.lam = float(lam)
        self.omega_c = float(omega_c)
        self.beta = float(beta)
        self.expansion = tuple(expansion)
        self.residual = float(residual)
        self.t_max = float(t_max)

    def expansion_at(self, times: npt.ArrayLike) -> ComplexArray:
        """Evaluate the exponential expansion of the kernel at ``times``."""
        times_array = np.asarray(times, dtype=np.float64)
        result = np.zeros(times_array.shape, dtype=np.complex128)
        for term in self.expansion:
            result += term(times_array)
        return result


@require(lambda lam, omega_c, beta: lam > 0.0 and omega_c > 0.0 and beta > 0.0)
def drude_lorentz_bath(lam: float, omega_c: float, beta: float) -> BathSpec:
    """Specify a Drude-Lorentz bath with its high-temperature kernel."""
    return BathSpec(
        family=BathFamily.DRUDE_LORENTZ_HT,
        lam=lam,
        omega_c=omega_c,
        beta=beta,
        expansion=[drude_lorentz_term(lam=lam, omega_c=omega_c, beta=beta)],
    )


class Coupling:
    """Couple a Hermitian system operator to an independent bath."""

    operator: Final[ComplexArray]
    bath: Final[BathSpec]

    @require(lambda operator: is_hermitian(np.asarray(operator, dtype=np.complex128)))
    def __init__(self, operator: npt.ArrayLike, bath: BathSpec) -> None:
        """Initialize with the given values."""
        self.operator = np.array(operator, dtype=np.complex128)
        self.operator.setflags(write=False)
        self.bath = bath


class ModelKind(enum.Enum):
    """List the studied system-bath models."""

    SPIN_BOSON = "spin_boson"
    PURE_DEPHASING = "pure_dephasing"
    CHROMOPHORIC = "chromophoric"
    EIT_LAMBDA = "eit_lambda"


def _ground_is_decoupled(
    h_sys: ComplexArray, couplings: Sequence[Coupling], ground: Optional[int]
) -> bool:
    if ground is None:
        return True

    for matrix in [h_sys] + [coupling.operator for coupling in couplings]:
        if np.any(matrix[ground, :] != 0.0) or np.any(matrix[:, ground] != 0.0):
            return False

    return True


# fmt: off
@invariant(lambda self: is_square(self.h_sys))
@invariant(
    lambda self: is_hermitian(self.h_sys, atol=HERMITICITY_TOL),
    "Hermitian system Hamiltonian"
)
@invariant(
    lambda self: all(
        coupling.operator.shape == self.h_sys.shape for coupling in self.couplings
    )
)
@invariant(lambda self: len(self.labels) == self.h_sys.shape[0])
@invariant(
    lambda self: self.ground is None or 0 <= self.ground < self.h_sys.shape[0]
)
@invariant(
    lambda self: _ground_is_decoupled(self.h_sys, self.couplings, self.ground),
    "Ground row and column are exactly zero in the Hamiltonian and the couplings"
)
@invariant(
    lambda self:
    (self.ground is None) == (self.dipoles is None)
    and (
        self.dipoles is None
        or len(self.dipoles) == self.h_sys.shape[0] - 1
    ),
    "Transition dipoles are given exactly for the models with a ground level"
)
# fmt: on
class HamiltonianModel(DBC):
    """Represent a system Hamiltonian with its couplings to independent baths."""

    kind: Final[ModelKind]

    #: System Hamiltonian in units of ε
    h_sys: Final[ComplexArray]

    couplings: Final[Tuple[Coupling, ...]]

    #: Names of the basis levels
    labels: Final[Tuple[str, ...]]

    #: Index of the ground (reference) level, if the model has one
    ground: Final[Optional[int]]

    #: Transition dipoles from the ground to the excited levels
    dipoles: Final[Optional[Tuple[float, ...]]]

    def __init__(
        self,
        kind: ModelKind,
        h_sys: npt.ArrayLike,
        couplings: Sequence[Coupling],
        labels: Sequence[str],
        ground: Optional[int] = None,
        dipoles: Optional[Sequence[float]] = None,
    ) -> None:
        """Initialize with the given values."""
        self.kind = kind
        self.h_sys = np.array(h_sys, dtype=np.complex128)
        self.h_sys.setflags(write=False)
        self.couplings = tuple(couplings)
        self.labels = tuple(labels)
        self.ground = ground
        self.dipoles = None if dipoles is None else tuple(float(d) for d in dipoles)

    @property
    def dim(self) -> int:
        """Give the dimension of the system."""
        return int(self.h_sys.shape[0])

    def excited_indices(self) -> List[int]:
        """List the levels other than the ground level, in basis order."""
        return [index for index in range(self.dim) if index != self.ground]

    def betas(self) -> List[float]:
        """List the inverse temperatures of the baths."""
        return [coupling.bath.beta for coupling in self.couplings]

    def common_beta(self) -> float:
        """Give the inverse temperature shared by all the baths."""
        betas = self.betas()
        if len(betas) == 0:
            raise ValueError("The model has no baths and hence no temperature")

        if any(abs(beta - betas[0]) > 1e-12 * betas[0] for beta in betas):
            raise ValueError(
                f"Expected all the baths at the same temperature, but got: {betas}"
            )

        return betas[0]


class ModelParameters:
    """Collect the parameters of the model builders; unused ones stay ``None``."""

    #: Level splitting of the two-level models and the energy scale of the EIT model
    eps: Final[Optional[float]]

    #: Tunneling of the spin-boson model
    delta: Final[Optional[float]]

    #: Excited-level energies of the chromophoric model
    site_energies: Final[Optional[Tuple[float, ...]]]

    #: Electronic couplings ``(i, j, v_ij)`` between excited levels, ``i < j``
    site_couplings: Final[Tuple[Tuple[int, int, float], ...]]

    #: Bath attached to every coupling operator (copied per excited level)
    bath: Final[Optional[BathSpec]]

    def __init__(
        self,
        bath: Optional[BathSpec] = None,
        eps: Optional[float] = None,
        delta: Optional[float] = None,
        site_energies: Optional[Sequence[float]] = None,
        site_couplings: Optional[Sequence[Tuple[int, int, float]]] = None,
    ) -> None:
        """Initialize with the given values."""
        self.bath = bath
        self.eps = eps
        self.delta = delta
        self.site_energies = (
            None if site_energies is None else tuple(float(e) for e in site_energies)
        )
        self.site_couplings = (
            ()
            if site_couplings is None
            else tuple((int(i), int(j), float(v)) for i, j, v in site_couplings)
        )


def missing_parameters(kind: ModelKind, params: ModelParameters) -> List[str]:
    """List what ``params`` lacks, or gets wrong, to build a model of ``kind``."""
    problems = []  # type: List[str]
    if params.bath is None:
        problems.append("bath")

    if kind is ModelKind.SPIN_BOSON:
        if params.eps is None:
            problems.append("eps")
        if params.delta is None:
            problems.append("delta")
        elif params.delta < 0.0:
            problems.append("delta must be non-negative")

    elif kind is ModelKind.PURE_DEPHASING:
        if params.eps is None:
            problems.append("eps")

    elif kind is ModelKind.CHROMOPHORIC:
        if params.site_energies is None or len(params.site_energies) == 0:
            problems.append("site_energies")
        else:
            count = len(params.site_energies)
            for i, j, _ in params.site_couplings:
                if not 0 <= i < j < count:
                    problems.append(f"site coupling ({i}, {j}) out of range")

    elif kind is ModelKind.EIT_LAMBDA:
        if params.eps is None:
            problems.append("eps")
        elif params.eps <= 0.0:
            problems.append("eps must be positive")

    else:
        assert_never(kind)

    return problems


@require(
    lambda kind, params: len(missing_parameters(kind, params)) == 0,
    "All the parameters of the model kind are given",
)
@ensure(lambda result: is_hermitian(result.h_sys))
def build_model(kind: ModelKind, params: ModelParameters) -> HamiltonianModel:
    """
    Build the model of ``kind``.

    The chromophoric basis is ``(|e_1⟩, ..., |e_N⟩, |g⟩)`` and every excited
    level couples through ``|e_i⟩⟨e_i|`` to its own copy of the bath. The EIT
    basis is ``(|e⟩, |+⟩, |−⟩)`` where the decoupled level ``|−⟩`` serves as
    the reference level of the weak light field.
    """
    bath = params.bath
    assert bath is not None

    if kind is ModelKind.SPIN_BOSON:
        assert params.eps is not None and params.delta is not None
        return HamiltonianModel(
            kind=kind,
            h_sys=0.5 * params.eps * SIGMA_Z - 0.5 * params.delta * SIGMA_X,
            couplings=[Coupling(operator=SIGMA_X, bath=bath)],
            labels=["up", "down"],
        )

    if kind is ModelKind.PURE_DEPHASING:
        assert params.eps is not None
        return HamiltonianModel(
            kind=kind,
            h_sys=0.5 * params.eps * SIGMA_Z,
            couplings=[Coupling(operator=SIGMA_Z, bath=bath)],
            labels=["up", "down"],
        )

    if kind is ModelKind.CHROMOPHORIC:
        assert params.site_energies is not None
        count = len(params.site_energies)
        h_sys = np.zeros((count + 1, count + 1), dtype=np.complex128)
        h_sys[:count, :count] = np.diag(params.site_energies)
        for i, j, coupling in params.site_couplings:
            h_sys[i, j] = coupling
            h_sys[j, i] = coupling

        couplings = []  # type: List[Coupling]
        for i in range(count):
            projector = np.zeros((count + 1, count + 1), dtype=np.complex128)
            projector[i, i] = 1.0
            couplings.append(Coupling(operator=projector, bath=bath))

        return HamiltonianModel(
            kind=kind,
            h_sys=h_sys,
            couplings=couplings,
            labels=[f"e{i + 1}" for i in range(count)] + ["g"],
            ground=count,
            dipoles=[1.0] * count,
        )

    if kind is ModelKind.EIT_LAMBDA:
        assert params.eps is not None
        h_sys = params.eps * np.array(
            [[6.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]], dtype=np.complex128
        )
        operator = np.array(
            [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], dtype=np.complex128
        )
        return HamiltonianModel(
            kind=kind,
            h_sys=h_sys,
            couplings=[Coupling(operator=operator, bath=bath)],
            labels=["e", "plus", "minus"],
            ground=2,
            dipoles=[1.0, 0.0],
        )

    assert_never(kind)


def projector_onto(dim: int, indices: Sequence[int]) -> ComplexArray:
    """Build the projector on the span of the basis levels ``indices``."""
    result = np.zeros((dim, dim), dtype=np.complex128)
    for index in indices:
        result[index, index] = 1.0
    return result


@require(
    lambda model: model.ground is not None, "Model with a ground level is expected"
)
def ground_projector(model: HamiltonianModel) -> ComplexArray:
    """Build ``P_g = |g⟩⟨g|``."""
    assert model.ground is not None
    return projector_onto(model.dim, [model.ground])


@require(
    lambda model: model.ground is not None, "Model with a ground level is expected"
)
def excited_projector(model: HamiltonianModel) -> ComplexArray:
    """Build ``P_e``, the projector on the excited manifold."""
    return projector_onto(model.dim, model.excited_indices())


@require(
    lambda model: model.ground is not None, "Model with a ground level is expected"
)
@ensure(lambda result: is_hermitian(result))
def dipole_operator(model: HamiltonianModel) -> ComplexArray:
    """Build ``μ = Σ_i d_i (|e_i⟩⟨g| + h.c.)``."""
    assert model.ground is not None and model.dipoles is not None
    result = np.zeros((model.dim, model.dim), dtype=np.complex128)
    for index, dipole in zip(model.excited_indices(), model.dipoles):
        result[index, model.ground] = dipole
        result[model.ground, index] = dipole
    return result


@require(lambda model, beta: beta > 0.0)
@require(
    lambda model, projector: projector is None or projector.shape == model.h_sys.shape
)
@ensure(lambda result: abs(np.trace(result.entries) - 1.0) <= 1e-10)
def thermal_system_state(
    model: HamiltonianModel, beta: float, projector: Optional[ComplexArray] = None
) -> DensityMatrix:
    """
    Compute ``P exp(-β H_S) P / Z`` of the uncoupled system.

    Only the range of ``projector`` is populated; the exponent is shifted by
    the lowest energy in that range to stay representable.
    """
    if projector is None:
        basis = np.eye(model.dim, dtype=np.complex128)
    else:
        occupations, vectors = scipy.linalg.eigh(
            0.5 * (projector + projector.conj().T)
        )
        basis = vectors[:, occupations > 0.5]
        if basis.shape[1] == 0:
            raise ValueError("The projector has an empty range")

    energies, local_vectors = scipy.linalg.eigh(basis.conj().T @ model.h_sys @ basis)
    weights = np.exp(-beta * (energies - np.min(energies)))
    eigenvectors = basis @ local_vectors

    state = (eigenvectors * weights) @ eigenvectors.conj().T
    state = state / np.trace(state)
    state = 0.5 * (state + state.conj().T)
    return DensityMatrix(state)


class PreparationKind(enum.Enum):
    """Classify the preparative maps."""

    UNITARY = "unitary"
    PROJECTOR = "projector"
    GENERAL = "general"


def _is_unitary(matrix: ComplexArray) -> bool:
    return bool(
        np.max(np.abs(matrix @ matrix.conj().T - np.eye(matrix.shape[0]))) <= 1e-12
    )


def _is_projector(matrix: ComplexArray) -> bool:
    return is_hermitian(matrix) and bool(
        np.max(np.abs(matrix @ matrix - matrix)) <= 1e-12
    )


# fmt: off
@invariant(lambda self: len(self.kraus) >= 1)
@invariant(
    lambda self: all(
        is_square(operator) and operator.shape == self.kraus[0].shape
        for operator in self.kraus
    )
)
@invariant(
    lambda self:
    self.kind is not PreparationKind.UNITARY
    or (len(self.kraus) == 1 and _is_unitary(self.kraus[0])),
    "A unitary preparation is a single unitary"
)
@invariant(
    lambda self:
    self.kind is not PreparationKind.PROJECTOR
    or (len(self.kraus) == 1 and _is_projector(self.kraus[0]) and self.normalize),
    "A projective preparation is a single normalized projector"
)
# fmt: on
class PreparativeMap(DBC):
    """
    Represent a map acting on the system only, ``ρ_tot ↦ Σ K ρ_tot K†``.

    Projective preparations renormalize the prepared global state.
    """

    kraus: Final[Tuple[ComplexArray, ...]]
    kind: Final[PreparationKind]
    normalize: Final[bool]

    def __init__(
        self,
        kraus: Sequence[npt.ArrayLike],
        kind: PreparationKind,
        normalize: bool = False,
    ) -> None:
        """Initialize with the given values."""
        operators = []  # type: List[ComplexArray]
        for operator in kraus:
            array = np.array(operator, dtype=np.complex128)
            array.setflags(write=False)
            operators.append(array)

        self.kraus = tuple(operators)
        self.kind = kind
        self.normalize = normalize

    @property
    def dim(self) -> int:
        """Give the dimension of the system the map acts on."""
        return int(self.kraus[0].shape[0])

    def apply_unnormalized(self, matrix: MatrixLike) -> ComplexArray:
        """Compute ``Σ K ρ K†`` without renormalizing."""
        entries = as_matrix(matrix)
        result = np.zeros_like(entries)
        for operator in self.kraus:
            result = result + operator @ entries @ operator.conj().T
        return result

    @require(lambda self, rho: rho.dim == self.dim)
    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        """Prepare the reduced state ``rho`` of an uncorrelated system."""
        result = self.apply_unnormalized(rho)
        if self.normalize:
            trace = np.trace(result).real
            if trace <= 0.0:
                raise ValueError(
                    "The preparation annihilates the state; "
                    "there is nothing to renormalize"
                )
            result = result / trace
        return DensityMatrix(0.5 * (result + result.conj().T))


class PreparationRecipe(enum.Enum):
    """List the preparations used in the studies."""

    #: ``exp(iθσ_x)``
    ROTATION_X = "rotation_x"

    #: Ideal measurement with the outcome ``|ψ⟩``
    MEASUREMENT = "measurement"

    #: ``P_g`` of a model with a ground level
    GROUND_PROJECTOR = "ground_projector"

    #: ``P_e`` of a model with a ground level
    EXCITED_PROJECTOR = "excited_projector"

    #: Leave the thermal state untouched
    IDENTITY = "identity"


#: Default measurement outcome ``(|↑⟩ + i|↓⟩)/√2``
DEFAULT_MEASUREMENT_TARGET: Final = np.array([1.0, 1.0j]) / np.sqrt(2.0)


class PreparationParameters:
    """Collect the parameters of the preparation recipes."""

    #: Rotation angle of :py:attr:`PreparationRecipe.ROTATION_X`
    theta: Final[Optional[float]]

    #: Outcome vector of :py:attr:`PreparationRecipe.MEASUREMENT`
    target: Final[Optional[ComplexArray]]

    #: Model whose levels the projector recipes refer to
    model: Final[Optional[HamiltonianModel]]

    #: Dimension of the identity preparation
    dim: Final[Optional[int]]

    def __init__(
        self,
        theta: Optional[float] = None,
        target: Optional[npt.ArrayLike] = None,
        model: Optional[HamiltonianModel] = None,
        dim: Optional[int] = None,
    ) -> None:
        """Initialize with the given values."""
        self.theta = theta
        self.target = (
            None if target is None else np.array(target, dtype=np.complex128)
        )
        self.model = model
        self.dim = dim


def _preparation_problems(
    kind: PreparationRecipe, params: PreparationParameters
) -> List[str]:
    problems = []  # type: List[str]
    if kind is PreparationRecipe.ROTATION_X:
        if params.theta is None:
            problems.append("theta")
    elif kind is PreparationRecipe.MEASUREMENT:
        if params.target is not None and (
            params.target.ndim != 1
            or abs(np.linalg.norm(params.target) - 1.0) > 1e-12
        ):
            problems.append("target must be a normalized vector")
    elif kind in (
        PreparationRecipe.GROUND_PROJECTOR,
        PreparationRecipe.EXCITED_PROJECTOR,
    ):
        if params.model is None or params.model.ground is None:
            problems.append("model with a ground level")
    elif kind is PreparationRecipe.IDENTITY:
        if params.dim is None and params.model is None:
            problems.append("dim or model")
    else:
        assert_never(kind)

    return problems


@require(
    lambda kind, params: len(_preparation_problems(kind, params)) == 0,
    "All the parameters of the preparation are valid",
)
def make_preparation(
    kind: PreparationRecipe, params: PreparationParameters
) -> PreparativeMap:
    """Build the preparative map following the recipe ``kind``."""
    if kind is PreparationRecipe.ROTATION_X:
        assert params.theta is not None
        return PreparativeMap(
            kraus=[scipy.linalg.expm(1.0j * params.theta * SIGMA_X)],
            kind=PreparationKind.UNITARY,
        )

    if kind is PreparationRecipe.MEASUREMENT:
        target = (
            params.target if params.target is not None else DEFAULT_MEASUREMENT_TARGET
        )
        return PreparativeMap(
            kraus=[np.outer(target, target.conj())],
            kind=PreparationKind.PROJECTOR,
            normalize=True,
        )

    if kind is PreparationRecipe.GROUND_PROJECTOR:
        assert params.model is not None
        return PreparativeMap(
            kraus=[ground_projector(params.model)],
            kind=PreparationKind.PROJECTOR,
            normalize=True,
        )

    if kind is PreparationRecipe.EXCITED_PROJECTOR:
        assert params.model is not None
        return PreparativeMap(
            kraus=[excited_projector(params.model)],
            kind=PreparationKind.PROJECTOR,
            normalize=True,
        )

    if kind is PreparationRecipe.IDENTITY:
        dim = params.dim
        if dim is None:
            assert params.model is not None
            dim = params.model.dim
        return PreparativeMap(
            kraus=[np.eye(dim, dtype=np.complex128)], kind=PreparationKind.UNITARY
        )

    assert_never(kind)


# region JSON


def _matrix_to_jsonable(matrix: ComplexArray) -> List[List[List[float]]]:
    return [[[float(value.real), float(value.imag)] for value in row] for row in matrix]


def _matrix_from_jsonable(jsonable: Any) -> ComplexArray:
    return np.array(
        [[complex(re, im) for re, im in row] for row in jsonable], dtype=np.complex128
    )


def bath_to_jsonable(bath: BathSpec) -> MutableMapping[str, Any]:
    """Convert ``bath`` to a JSON-able mapping."""
    return {
        "family": bath.family.value,
        "lambda": bath.lam,
        "omega_c": bath.omega_c,
        "beta": bath.beta,
        "expansion": [
            {
                "a_re": term.amplitude.real,
                "a_im": term.amplitude.imag,
                "nu_re": term.rate.real,
                "nu_im": term.rate.imag,
            }
            for term in bath.expansion
        ],
        "residual": bath.residual,
        "t_max": bath.t_max,
    }


def bath_from_jsonable(jsonable: Mapping[str, Any]) -> BathSpec:
    """Parse the mapping produced by :py:func:`bath_to_jsonable`."""
    return BathSpec(
        family=BathFamily(jsonable["family"]),
        lam=float(jsonable["lambda"]),
        omega_c=float(jsonable["omega_c"]),
        beta=float(jsonable["beta"]),
        expansion=[
            ExponentialTerm(
                amplitude=complex(term["a_re"], term["a_im"]),
                rate=complex(term["nu_re"], term["nu_im"]),
            )
            for term in jsonable["expansion"]
        ],
        residual=float(jsonable.get("residual", 0.0)),
        t_max=float(jsonable.get("t_max", 0.0)),
    )


def model_to_jsonable(model: HamiltonianModel) -> MutableMapping[str, Any]:
    """Convert ``model`` to a JSON-able mapping."""
    return {
        "kind": model.kind.value,
        "dim": model.dim,
        "h_sys": _matrix_to_jsonable(model.h_sys),
        "couplings": [
            {
                "op": _matrix_to_jsonable(coupling.operator),
                "bath": bath_to_jsonable(coupling.bath),
            }
            for coupling in model.couplings
        ],
        "labels": list(model.labels),
        "ground": model.ground,
        "dipoles": None if model.dipoles is None else list(model.dipoles),
    }


def model_from_jsonable(jsonable: Mapping[str, Any]) -> HamiltonianModel:
    """Parse the mapping produced by :py:func:`model_to_jsonable`."""
    h_sys = _matrix_from_jsonable(jsonable["h_sys"])
    if h_sys.shape != (int(jsonable["dim"]), int(jsonable["dim"])):
        raise ValueError(
            f"Expected h_sys of dimension {jsonable['dim']}, "
            f"but got shape {h_sys.shape}"
        )

    return HamiltonianModel(
        kind=ModelKind(jsonable["kind"]),
        h_sys=h_sys,
        couplings=[
            Coupling(
                operator=_matrix_from_jsonable(coupling["op"]),
                bath=bath_from_jsonable(coupling["bath"]),
            )
            for coupling in jsonable["couplings"]
        ],
        labels=jsonable["labels"],
        ground=jsonable.get("ground", None),
        dipoles=jsonable.get("dipoles", None),
    )


# endregion
