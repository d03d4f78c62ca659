"""
Compute dipole correlation functions, their spectra and the temperature.

With the dipole operator ``μ``, the absorption correlation function starts
from the ground-state product ``|g⟩⟨g| ⊗ ρ_E``,

    A(t) = tr{μ(t) μ ρ^g},

and the emission one from the correlated equilibrium ``ρ^e`` of the whole
system within the excited manifold,

    E(t) = tr{μ(t) μ ρ^e}.

Both are sums of the elements of reduced operators living on the coherences
``|e_i⟩⟨g|``. The reduced operators are sampled over a short window and
continued with transfer tensors.
"""
import enum
import json
import logging
import pathlib
import threading
from typing import (
    Any,
    Final,
    List,
    MutableMapping,
    Optional,
    Sequence,
)

import numpy as np
import numpy.typing as npt
import scipy.fft
import scipy.signal
import scipy.stats
from icontract import DBC, ensure, invariant, require

from kernelforge import heom
from kernelforge.common import (
    ComplexArray,
    RealArray,
    ThermometryError,
    assert_never,
    is_uniform_grid,
    make_time_grid,
    steps_in,
)
from kernelforge.models import (
    HamiltonianModel,
    ModelKind,
    dipole_operator,
    excited_projector,
    thermal_system_state,
)
from kernelforge.operators import (
    Block,
    ComplexTimeSeries,
    CorrelationKind,
    Trajectory,
    same_grid,
)
from kernelforge.ttm import (
    DecayReport,
    DecayThresholds,
    InhomogeneousSeries,
    Sampler,
    TransferTensors,
    check_gate,
    decay_report,
    inhomogeneity,
    learn_maps,
    matrix_unit_basis,
    propagate_with_tensors,
    sample_concurrently,
    tensors_from_maps,
)

LOGGER = logging.getLogger(__name__)

#: Decay rate of the exponential window in units of ε
DEFAULT_WINDOW_RATE: Final = 0.02

#: Relative spectral level below which points are left out of the fits
DEFAULT_FLOOR: Final = 1e-3

#: Fewest spectral points a temperature fit accepts
MIN_THERMOMETRY_POINTS: Final = 10

#: Derivative norm at which the excited equilibrium counts as stationary
DEFAULT_RELAXATION_TOL: Final = 1e-8

#: Longest relaxation towards the excited equilibrium in units of 1/ε
DEFAULT_RELAXATION_T_MAX: Final = 200.0

#: Relative spectral level below which the KMS residual is not evaluated
DEFAULT_KMS_FLOOR: Final = 1e-2


class CorrelationSamplers:
    """
    Bundle the two kinds of samples needed for the reduced operators.

    The product sampler evolves ``X ⊗ ρ_E`` for a reduced ``X``. The emission
    sampler evolves the excited equilibrium multiplied from the right by the
    adjoint of its argument, ``ρ^e R†``. Both sample on the same grid.
    """

    product: Final[Sampler]
    emission: Final[Sampler]

    def __init__(self, product: Sampler, emission: Sampler) -> None:
        """Initialize with the given values."""
        self.product = product
        self.emission = emission


@require(lambda model: model.ground is not None, "Model with a ground level")
@require(lambda times: is_uniform_grid(np.asarray(times, dtype=np.float64)))
def hierarchy_samplers(
    model: HamiltonianModel,
    times: npt.ArrayLike,
    depth: int = heom.DEFAULT_DEPTH,
    substeps: int = heom.DEFAULT_SUBSTEPS,
    scaled: bool = False,
    relaxation_tol: float = DEFAULT_RELAXATION_TOL,
    relaxation_t_max: float = DEFAULT_RELAXATION_T_MAX,
) -> CorrelationSamplers:
    """
    Give the samplers backed by the hierarchy of ``model``.

    The excited equilibrium is relaxed once, on the first emission sample,
    from the thermal state of the uncoupled excited manifold.
    """
    times_array = np.array(times, dtype=np.float64)
    propagator = heom.propagator_for(model, depth, scaled, substeps)
    identity = np.eye(model.dim, dtype=np.complex128)

    lock = threading.Lock()
    relaxed = []  # type: List[heom.HierarchyState]

    def equilibrium() -> heom.HierarchyState:
        with lock:
            if len(relaxed) == 0:
                seed_rho = thermal_system_state(
                    model, model.common_beta(), projector=excited_projector(model)
                )
                seed = propagator.init_product_state(seed_rho.entries)
                relaxed.append(
                    propagator.relax_to_stationary(
                        seed, tol=relaxation_tol, t_max=relaxation_t_max
                    )
                )
            return relaxed[0]

    def emission(right: ComplexArray) -> Trajectory:
        state = heom.apply_system_operator(equilibrium(), left=identity, right=right)
        trajectory, _ = propagator.propagate(state, times_array)
        return trajectory

    return CorrelationSamplers(
        product=propagator.product_sampler(times_array), emission=emission
    )


# region Reduced operators


def _has_coherence_block(model: HamiltonianModel) -> bool:
    return model.ground is not None and model.kind in (
        ModelKind.CHROMOPHORIC,
        ModelKind.EIT_LAMBDA,
    )


def coherence_block(model: HamiltonianModel) -> Block:
    """Give the block of the coherences ``|e_i⟩⟨g|`` of ``model``."""
    assert model.ground is not None
    return Block.coherence(model.dim, model.excited_indices(), model.ground)


class LearnedBlock:
    """Hold the tensors of the coherence block with the samples and the gate."""

    kind: Final[CorrelationKind]
    tensors: Final[TransferTensors]

    #: Sample of every preparation, one per excited level
    samples: Final[Sequence[Trajectory]]

    #: Inhomogeneity of every sample; empty for absorption
    inhomogeneities: Final[Sequence[InhomogeneousSeries]]

    report: Final[DecayReport]

    def __init__(
        self,
        kind: CorrelationKind,
        tensors: TransferTensors,
        samples: Sequence[Trajectory],
        inhomogeneities: Sequence[InhomogeneousSeries],
        report: DecayReport,
    ) -> None:
        """Initialize with the given values."""
        self.kind = kind
        self.tensors = tensors
        self.samples = samples
        self.inhomogeneities = inhomogeneities
        self.report = report


@require(lambda model: _has_coherence_block(model))
@require(lambda dt: dt > 0.0)
@require(lambda dt, tau_sample: steps_in(tau_sample, dt) >= 1)
@require(lambda sample_length: sample_length is None or sample_length >= 1)
@require(
    lambda model, dt, tensors: tensors is None
    or (tensors.block == coherence_block(model) and abs(tensors.dt - dt) <= 1e-12 * dt),
    "Tensors of the coherence block on the grid",
)
def learn_block(
    model: HamiltonianModel,
    kind: CorrelationKind,
    samplers: CorrelationSamplers,
    dt: float,
    tau_sample: float,
    thresholds: DecayThresholds = DecayThresholds(),
    sample_length: Optional[int] = None,
    max_workers: Optional[int] = None,
    tensors: Optional[TransferTensors] = None,
) -> LearnedBlock:
    """
    Learn the transfer tensors of the coherence block and evaluate the gate.

    The ``samplers`` must sample on the grid ``0, dt, ..., tau_sample``.
    Already learned ``tensors`` of the block are reused as they are.
    Absorption starts from product states and needs no correlated samples.
    Emission samples ``ρ^e |e_i⟩⟨g|`` for every excited level ``e_i``; the
    samples are cut to ``sample_length`` points if given, down to a single
    point which neglects the initial correlations.
    """
    block = coherence_block(model)
    times = make_time_grid(dt, steps_in(tau_sample, dt))
    basis = matrix_unit_basis(block)

    if tensors is None:
        maps = learn_maps(
            samplers.product, basis, times, block=block, max_workers=max_workers
        )
        tensors = tensors_from_maps(maps)

    samples = []  # type: List[Trajectory]
    inhomogeneities = []  # type: List[InhomogeneousSeries]

    if kind is CorrelationKind.ABSORPTION:
        # Product states; the maps already reproduce them.
        samples = [
            Trajectory(times=times[:1], values=unit[np.newaxis]) for unit in basis
        ]

    elif kind is CorrelationKind.EMISSION:
        rights = [unit.conj().T for unit in basis]
        samples = sample_concurrently(samplers.emission, rights, max_workers)
        if sample_length is not None:
            samples = [
                sample.truncated(min(sample_length, len(sample))) for sample in samples
            ]
        inhomogeneities = [inhomogeneity(tensors, sample) for sample in samples]

    else:
        assert_never(kind)

    report = decay_report(tensors, inhomogeneities, thresholds)
    return LearnedBlock(
        kind=kind,
        tensors=tensors,
        samples=samples,
        inhomogeneities=inhomogeneities,
        report=report,
    )


class ReducedOperatorResult:
    """Hold the reduced operator, its dipole-weighted sum and the gate."""

    #: Elements ``(i, j)`` of the reduced operator over the excited levels
    trajectory: Final[Trajectory]

    correlation: Final[ComplexTimeSeries]
    report: Final[DecayReport]
    tensors: Final[TransferTensors]

    #: Tensors and samples the trajectory is continued from
    learned: Final[LearnedBlock]

    def __init__(
        self,
        trajectory: Trajectory,
        correlation: ComplexTimeSeries,
        learned: LearnedBlock,
    ) -> None:
        """Initialize with the given values."""
        self.trajectory = trajectory
        self.correlation = correlation
        self.report = learned.report
        self.tensors = learned.tensors
        self.learned = learned


@require(
    lambda dt, tau_sample, t_total: steps_in(t_total, dt) >= steps_in(tau_sample, dt)
)
@ensure(
    lambda dt, t_total, result: len(result.correlation) == steps_in(t_total, dt) + 1
)
def reduced_operator_trajectory(
    model: HamiltonianModel,
    kind: CorrelationKind,
    samplers: CorrelationSamplers,
    dt: float,
    tau_sample: float,
    t_total: float,
    thresholds: DecayThresholds = DecayThresholds(),
    sample_length: Optional[int] = None,
    max_workers: Optional[int] = None,
    tensors: Optional[TransferTensors] = None,
) -> ReducedOperatorResult:
    """
    Compute the reduced absorption or emission operator up to ``t_total``.

    With the preparations ``|e_j⟩⟨g|`` evolved from the ground state, the
    absorption elements are ``Â_ij(t) = σ^{(j)}_{e_i g}(t)``. With
    ``τ^{(i)}`` evolved from ``ρ^e |e_i⟩⟨g|``, the emission elements are
    ``Ê_ij(t) = conj(τ^{(i)}_{e_j g}(t))``. Weighted by the transition
    dipoles, the elements sum up to ``A(t)`` and ``E(t)``, respectively.

    See :py:func:`learn_block` for the parameters of the sampling.

    :raise: :py:class:`DecayGateError` if the decay gate fails
    """
    learned = learn_block(
        model=model,
        kind=kind,
        samplers=samplers,
        dt=dt,
        tau_sample=tau_sample,
        thresholds=thresholds,
        sample_length=sample_length,
        max_workers=max_workers,
        tensors=tensors,
    )
    check_gate(learned.report)

    assert model.ground is not None and model.dipoles is not None
    ground = model.ground
    excited = model.excited_indices()
    n_total = steps_in(t_total, dt) + 1

    count = len(excited)
    values = np.empty((n_total, count, count), dtype=np.complex128)
    for preparation, sample in enumerate(learned.samples):
        extended = propagate_with_tensors(learned.tensors, sample, n_total)
        column = extended.values[:, excited, ground]

        if kind is CorrelationKind.ABSORPTION:
            values[:, :, preparation] = column
        elif kind is CorrelationKind.EMISSION:
            values[:, preparation, :] = np.conj(column)
        else:
            assert_never(kind)

    dipoles = np.array(model.dipoles, dtype=np.float64)
    correlation = np.einsum("i,nij,j->n", dipoles, values, dipoles)

    return ReducedOperatorResult(
        trajectory=Trajectory.on_grid(dt, values),
        correlation=ComplexTimeSeries(dt=dt, values=correlation, kind=kind),
        learned=learned,
    )


def dipole_correlation(
    model: HamiltonianModel,
    kind: CorrelationKind,
    samplers: CorrelationSamplers,
    dt: float,
    tau_sample: float,
    t_total: float,
    thresholds: DecayThresholds = DecayThresholds(),
    sample_length: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> ComplexTimeSeries:
    """
    Compute ``A(t)`` or ``E(t)`` up to ``t_total``.

    See :py:func:`reduced_operator_trajectory`.
    """
    return reduced_operator_trajectory(
        model=model,
        kind=kind,
        samplers=samplers,
        dt=dt,
        tau_sample=tau_sample,
        t_total=t_total,
        thresholds=thresholds,
        sample_length=sample_length,
        max_workers=max_workers,
    ).correlation


@require(lambda model: model.ground is not None)
def direct_correlation(
    model: HamiltonianModel, kind: CorrelationKind, samplers: CorrelationSamplers
) -> ComplexTimeSeries:
    """
    Compute the correlation function straight from the samplers, no tensors.

    The series covers the grid of the samplers.
    """
    mu = dipole_operator(model)

    if kind is CorrelationKind.ABSORPTION:
        assert model.ground is not None
        ground_state = np.zeros((model.dim, model.dim), dtype=np.complex128)
        ground_state[model.ground, model.ground] = 1.0
        trajectory = samplers.product(mu @ ground_state)
        values = np.einsum("ij,nji->n", mu, trajectory.values)
    elif kind is CorrelationKind.EMISSION:
        trajectory = samplers.emission(mu)
        values = np.conj(np.einsum("ij,nji->n", mu, trajectory.values))
    else:
        assert_never(kind)

    return ComplexTimeSeries(dt=trajectory.dt, values=values, kind=kind)


# endregion

# region Spectra


@invariant(lambda self: self.rate > 0.0)
class ExponentialWindow(DBC):
    """Damp a correlation function by ``exp(-rate · t)`` before transforming."""

    rate: Final[float]

    def __init__(self, rate: float = DEFAULT_WINDOW_RATE) -> None:
        """Initialize with the given values."""
        self.rate = rate

    def __repr__(self) -> str:
        return f"ExponentialWindow(rate={self.rate!r})"


# fmt: off
@invariant(lambda self: self.omega.ndim == 1 and len(self.omega) >= 2)
@invariant(lambda self: self.values.shape == self.omega.shape)
@invariant(lambda self: bool(np.all(np.isfinite(self.values))))
@invariant(lambda self: self.pad_factor >= 1)
# fmt: on
class Spectrum(DBC):
    """Represent a real spectrum on a uniform frequency grid."""

    #: Increasing frequencies in units of ε
    omega: Final[RealArray]

    values: Final[RealArray]

    kind: Final[Optional[CorrelationKind]]

    #: Rate of the exponential window, or ``None`` if none was applied
    window_rate: Final[Optional[float]]

    pad_factor: Final[int]

    #: Inverse temperature attributed to the spectrum, if any
    beta_used: Final[Optional[float]]

    def __init__(
        self,
        omega: npt.ArrayLike,
        values: npt.ArrayLike,
        kind: Optional[CorrelationKind],
        window_rate: Optional[float],
        pad_factor: int,
        beta_used: Optional[float] = None,
    ) -> None:
        """Initialize with copies of the arrays."""
        self.omega = np.array(omega, dtype=np.float64)
        self.values = np.array(values, dtype=np.float64)
        self.omega.setflags(write=False)
        self.values.setflags(write=False)
        self.kind = kind
        self.window_rate = window_rate
        self.pad_factor = pad_factor
        self.beta_used = beta_used


def _half_line_transform(
    values: ComplexArray,
    dt: float,
    sign: int,
    window: Optional[ExponentialWindow],
    pad_factor: int,
) -> ComplexArray:
    """
    Compute ``∫_0^∞ exp(sign · iωt) f(t) dt`` on the unshifted FFT grid.

    The trapezoid rule weighs ``t = 0`` by one half.
    """
    weighted = np.array(values, dtype=np.complex128)
    if window is not None:
        damping = np.exp(-window.rate * dt * np.arange(len(weighted)))
        weighted = weighted * damping.reshape((-1,) + (1,) * (weighted.ndim - 1))
    weighted[0] *= 0.5

    length = pad_factor * len(weighted)
    if sign > 0:
        return np.asarray(
            dt * length * scipy.fft.ifft(weighted, n=length, axis=0),
            dtype=np.complex128,
        )

    return np.asarray(
        dt * scipy.fft.fft(weighted, n=length, axis=0), dtype=np.complex128
    )


def _sign_of(kind: Optional[CorrelationKind]) -> int:
    """Give the sign of the exponent ``exp(±iωt)`` of the transform."""
    if kind is None or kind is CorrelationKind.ABSORPTION:
        return 1

    if kind is CorrelationKind.EMISSION:
        return -1

    assert_never(kind)


def _frequencies(length: int, dt: float) -> RealArray:
    return np.asarray(
        2.0 * np.pi * scipy.fft.fftshift(scipy.fft.fftfreq(length, d=dt)),
        dtype=np.float64,
    )


@require(lambda pad_factor: pad_factor >= 1)
@require(lambda series: len(series) >= 2)
@ensure(
    lambda series, pad_factor, result: len(result.omega) == pad_factor * len(series)
)
def spectrum(
    series: ComplexTimeSeries,
    window: Optional[ExponentialWindow] = ExponentialWindow(),
    pad_factor: int = 1,
) -> Spectrum:
    """
    Transform the correlation function to a real spectrum.

    The negative times follow from ``f(-t) = f*(t)``, so the spectrum is
    ``2 Re ∫_0^∞ exp(±iωt) f(t) dt`` with ``+`` for absorption and ``-`` for
    emission. A series without a kind is transformed as absorption.
    """
    transform = _half_line_transform(
        series.values, series.dt, _sign_of(series.kind), window, pad_factor
    )
    values = 2.0 * scipy.fft.fftshift(transform).real
    return Spectrum(
        omega=_frequencies(len(transform), series.dt),
        values=values,
        kind=series.kind,
        window_rate=None if window is None else window.rate,
        pad_factor=pad_factor,
    )


class Transform(enum.Enum):
    """List how a correlation function becomes a spectrum."""

    #: Discrete transform of the continuation sampled up to ``t_total``
    FFT = "fft"

    #: Generating function of the unlimited tensor continuation
    TENSORS = "tensors"


def _generating_source(
    learned: LearnedBlock, dipoles: RealArray, n_points: int
) -> ComplexArray:
    """
    Sum the dipole-weighted initial states and inhomogeneities of the samples.

    Row ``n`` holds ``Σ_i μ_i I^{(i)}_n`` with ``I^{(i)}_0`` the initial block
    vector of the sample ``i``; rows past the samples are zero.
    """
    tensors = learned.tensors
    block = tensors.block
    source = np.zeros((n_points, block.size), dtype=np.complex128)
    for weight, sample in zip(dipoles, learned.samples):
        source[0] += weight * block.extract(sample.values[0])
        terms = inhomogeneity(tensors, sample).terms
        source[1 : 1 + len(terms)] += weight * terms

    return source


@require(lambda model: model.dipoles is not None)
@require(
    lambda learned, n_points: n_points > learned.tensors.memory
    and all(len(sample) <= n_points for sample in learned.samples),
    "The frequency grid resolves the tensors and the samples",
)
@ensure(lambda n_points, result: len(result.omega) == n_points)
def tensor_spectrum(
    model: HamiltonianModel,
    learned: LearnedBlock,
    n_points: int,
    window: Optional[ExponentialWindow] = None,
) -> Spectrum:
    """
    Compute the spectrum of the unlimited tensor continuation of ``learned``.

    The continuation ``y_n = Σ_k T_k y_{n-k} + I_n`` has the generating
    function ``Y(z) = (1 - T(z))⁻¹ I(z)`` with ``T(z) = Σ_k T_k z^k``. On the
    unit circle ``z = exp(iω dt)`` it gives the half-line transform of all
    the times at once, so lines that never decay need no window. The
    emission spectrum follows from the conjugate of ``E(t)``, which
    transforms with the same sign as the absorption.

    The ``n_points`` frequencies are those of :py:func:`spectrum` applied to
    a series of ``n_points`` samples. An optional ``window`` damps the
    continuation as :py:func:`spectrum` does.

    :raise: :py:class:`numpy.linalg.LinAlgError` if ``1 - T(z)`` is singular
        on the grid
    """
    assert model.dipoles is not None
    tensors = learned.tensors
    dt = tensors.dt
    size = tensors.block.size
    dipoles = np.array(model.dipoles, dtype=np.float64)

    source = _generating_source(learned, dipoles, n_points)
    stack = np.zeros((n_points, size, size), dtype=np.complex128)
    stack[1 : tensors.memory + 1] = tensors.tensors

    if window is not None:
        damping = np.exp(-window.rate * dt * np.arange(n_points))
        source = source * damping[:, np.newaxis]
        stack = stack * damping[:, np.newaxis, np.newaxis]

    # Σ_n x_n exp(2πi n l / N) at every frequency index l
    transfer = n_points * scipy.fft.ifft(stack, axis=0)
    generating = n_points * scipy.fft.ifft(source, axis=0)

    resolved = np.linalg.solve(
        np.eye(size, dtype=np.complex128) - transfer, generating[..., np.newaxis]
    )[..., 0]
    half_line = dt * (resolved @ dipoles - 0.5 * (source[0] @ dipoles))

    return Spectrum(
        omega=_frequencies(n_points, dt),
        values=2.0 * scipy.fft.fftshift(half_line).real,
        kind=learned.kind,
        window_rate=None if window is None else window.rate,
        pad_factor=1,
    )


def write_spectrum_csv(spectrum_: Spectrum, path: pathlib.Path) -> None:
    """Write the spectrum as CSV with the columns ``omega, value``."""
    np.savetxt(
        str(path),
        np.column_stack([spectrum_.omega, spectrum_.values]),
        delimiter=",",
        header="omega,value",
        comments="",
        fmt="%.17g",
    )


# endregion

# region Thermometry


class ThermometryResult:
    """Report a temperature fitted from the ratio of two spectra."""

    #: Fitted inverse temperature in units of 1/ε
    beta: Final[float]

    #: Intercept of the fit, ``ln(Z_e / Z_E)``
    offset: Final[float]

    #: Standard error of the fitted ``beta``
    stderr: Final[float]

    #: Number of frequencies the fit used
    n_points: Final[int]

    def __init__(
        self, beta: float, offset: float, stderr: float, n_points: int
    ) -> None:
        """Initialize with the given values."""
        self.beta = beta
        self.offset = offset
        self.stderr = stderr
        self.n_points = n_points

    @property
    def partition_ratio(self) -> float:
        """Give ``Z_e / Z_E``."""
        return float(np.exp(self.offset))


def _same_frequencies(a: Spectrum, b: Spectrum) -> bool:
    return a.omega.shape == b.omega.shape and bool(
        np.allclose(a.omega, b.omega, rtol=0.0, atol=1e-12)
    )


@require(lambda absorption, emission: _same_frequencies(absorption, emission))
@require(lambda floor: 0.0 < floor < 1.0)
def estimate_beta(
    absorption: Spectrum, emission: Spectrum, floor: float = DEFAULT_FLOOR
) -> ThermometryResult:
    """
    Fit ``ln(A(ω)/E(ω)) = βω + ln(Z_e/Z_E)`` by least squares.

    Only the frequencies where both spectra exceed ``floor`` times their
    maximum are included.

    :raise: :py:class:`ThermometryError` if fewer than ten points remain
    """
    a_values = absorption.values
    e_values = emission.values
    mask = (a_values > floor * np.max(a_values)) & (e_values > floor * np.max(e_values))
    count = int(np.count_nonzero(mask))
    if count < MIN_THERMOMETRY_POINTS:
        raise ThermometryError(
            f"Only {count} frequencies have both spectra above {floor:g} of "
            f"their maxima, but at least {MIN_THERMOMETRY_POINTS} are needed"
        )

    omega = absorption.omega[mask]
    log_ratio = np.log(a_values[mask] / e_values[mask])
    fit = scipy.stats.linregress(omega, log_ratio)

    result = ThermometryResult(
        beta=float(fit.slope),
        offset=float(fit.intercept),
        stderr=float(fit.stderr),
        n_points=count,
    )
    LOGGER.info(
        "Fitted beta=%.6g ± %.2g over %d frequencies",
        result.beta,
        result.stderr,
        count,
    )
    return result


def thermometry_to_jsonable(
    result: ThermometryResult,
    window: Optional[ExponentialWindow],
    pad_factor: int,
    floor: float,
) -> MutableMapping[str, Any]:
    """Convert the fit and its settings to a JSON-able report."""
    return {
        "beta": result.beta,
        "beta_stderr": result.stderr,
        "offset": result.offset,
        "partition_ratio": result.partition_ratio,
        "n_points": result.n_points,
        "window": (
            {"kind": "none"}
            if window is None
            else {"kind": "exponential", "rate": window.rate}
        ),
        "pad_factor": pad_factor,
        "floor": floor,
    }


def write_thermometry_json(
    jsonable: MutableMapping[str, Any], path: pathlib.Path
) -> None:
    """Write the thermometry report with sorted keys."""
    path.write_text(json.dumps(jsonable, indent=2, sort_keys=True), encoding="utf-8")


def _full_line_elements(
    trajectory: Trajectory,
    sign: int,
    window: Optional[ExponentialWindow],
    pad_factor: int,
) -> ComplexArray:
    """
    Compute the full-line transforms ``F_ij = H_ij + conj(H_ji)`` of the elements.

    ``H_ij`` is the half-line transform of the element ``(i, j)``; the
    negative times follow from ``X(-t) = X(t)†``. The result is indexed
    ``(ω, i, j)`` on the unshifted FFT grid.
    """
    half = _half_line_transform(
        trajectory.values, trajectory.dt, sign, window, pad_factor
    )
    return np.asarray(half + np.conj(np.swapaxes(half, 1, 2)), dtype=np.complex128)


@require(lambda a_hat, e_hat: same_grid(a_hat, e_hat) and a_hat.dim == e_hat.dim)
@require(lambda a_hat: len(a_hat) >= 2)
@require(lambda pad_factor: pad_factor >= 1)
@require(lambda floor: 0.0 <= floor < 1.0)
@ensure(lambda result: result >= 0.0)
def kms_residual(
    a_hat: Trajectory,
    e_hat: Trajectory,
    beta: float,
    log_z_ratio: float,
    window: Optional[ExponentialWindow] = None,
    pad_factor: int = 1,
    floor: float = DEFAULT_KMS_FLOOR,
) -> float:
    """
    Measure the elementwise violation of ``Ê(ω) = Â(ω) exp(-βω - log_z_ratio)``.

    The largest deviation is taken over the frequencies where both reduced
    operators reach ``floor`` of their maxima, and is relative to the
    maximum of ``|Ê(ω)|``. The ``log_z_ratio`` is ``ln(Z_e/Z_E)``.
    """
    a_omega = _full_line_elements(a_hat, 1, window, pad_factor)
    e_omega = _full_line_elements(e_hat, -1, window, pad_factor)

    length = a_omega.shape[0]
    omega = 2.0 * np.pi * scipy.fft.fftfreq(length, d=a_hat.dt)

    a_level = np.max(np.abs(a_omega), axis=(1, 2))
    e_level = np.max(np.abs(e_omega), axis=(1, 2))
    a_peak = float(np.max(a_level))
    e_peak = float(np.max(e_level))
    if e_peak == 0.0:
        return 0.0 if a_peak == 0.0 else float("inf")

    mask = (a_level >= floor * a_peak) & (e_level >= floor * e_peak)
    if not np.any(mask):
        return 0.0

    factor = np.exp(-beta * omega[mask] - log_z_ratio)
    deviation = np.abs(e_omega[mask] - a_omega[mask] * factor[:, None, None])
    return float(np.max(deviation)) / e_peak


# endregion

# region Features


class Peak:
    """Represent a local maximum of a spectrum."""

    omega: Final[float]
    height: Final[float]

    def __init__(self, omega: float, height: float) -> None:
        """Initialize with the given values."""
        self.omega = omega
        self.height = height

    def __repr__(self) -> str:
        return f"Peak(omega={self.omega!r}, height={self.height!r})"


@require(lambda prominence: 0.0 <= prominence < 1.0)
@ensure(
    lambda result: all(
        earlier.omega < later.omega for earlier, later in zip(result, result[1:])
    )
)
def find_peaks(spectrum_: Spectrum, prominence: float = 1e-2) -> List[Peak]:
    """
    Find the local maxima whose prominence exceeds a fraction of the maximum.

    The peaks are sorted by frequency.
    """
    scale = float(np.max(np.abs(spectrum_.values)))
    positions, _ = scipy.signal.find_peaks(
        spectrum_.values, prominence=prominence * scale
    )
    return [
        Peak(omega=float(spectrum_.omega[index]), height=float(spectrum_.values[index]))
        for index in positions
    ]


class Dip:
    """Represent a local minimum of a spectrum between two peaks."""

    omega: Final[float]
    value: Final[float]

    #: ``1 - value / h`` where ``h`` is the lower of the neighbouring peaks
    contrast: Final[float]

    def __init__(self, omega: float, value: float, contrast: float) -> None:
        """Initialize with the given values."""
        self.omega = omega
        self.value = value
        self.contrast = contrast

    def __repr__(self) -> str:
        return (
            f"Dip(omega={self.omega!r}, value={self.value!r}, "
            f"contrast={self.contrast!r})"
        )


@require(lambda prominence: 0.0 <= prominence < 1.0)
def find_dip(
    spectrum_: Spectrum, near: float, prominence: float = 1e-2
) -> Optional[Dip]:
    """
    Find the local minimum between two peaks that lies closest to ``near``.

    Return ``None`` if no minimum is flanked by peaks on both sides.
    """
    peaks = find_peaks(spectrum_, prominence=prominence)
    if len(peaks) < 2:
        return None

    values = spectrum_.values
    omega = spectrum_.omega
    best = None  # type: Optional[Dip]
    for left, right in zip(peaks, peaks[1:]):
        between = np.flatnonzero((omega > left.omega) & (omega < right.omega))
        if len(between) == 0:
            continue

        index = int(between[np.argmin(values[between])])
        reference = min(left.height, right.height)
        dip = Dip(
            omega=float(omega[index]),
            value=float(values[index]),
            contrast=1.0 - float(values[index]) / reference,
        )
        if best is None or abs(dip.omega - near) < abs(best.omega - near):
            best = dip

    return best


# endregion
