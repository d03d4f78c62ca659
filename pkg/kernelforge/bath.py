"""
Compute bath correlation functions, their exponential fits and lineshapes.

The correlation function of a harmonic bath with spectral density ``J`` is

    C(t) = ∫₀^∞ dω J(ω) [coth(βω/2) cos ωt − i sin ωt],

and its lineshape function is ``g(t) = ∫₀^t ds (t − s) C(s)``.
"""
import functools
import logging
import math
import warnings
from typing import Any, Callable, Final, List, Mapping, MutableMapping, Optional, Tuple

import numpy as np
import numpy.typing as npt
import scipy.integrate
import scipy.linalg
import scipy.optimize
from icontract import DBC, ensure, invariant, require

from kernelforge.common import (
    ComplexArray,
    FitError,
    QuadratureError,
    RealArray,
    assert_never,
)
from kernelforge.models import (
    BathFamily,
    BathSpec,
    ExponentialTerm,
    drude_lorentz_bath,
)
from kernelforge.operators import ComplexTimeSeries

LOGGER = logging.getLogger(__name__)

#: Relative accuracy required from every frequency integral
QUADRATURE_TOL: Final = 1e-8

#: Upper integration limit of the ohmic density in units of the cutoff;
#: the integrand tail beyond is below 1e-12 of its peak.
OHMIC_CUTOFF_MULTIPLE: Final = 40.0

#: Below this fraction of the cutoff, ``J coth`` is evaluated by its series
SERIES_THRESHOLD: Final = 1e-6

#: Number of exponential terms fitted to an ohmic kernel by default
DEFAULT_N_TERMS: Final = 3

#: Default fit tolerance relative to ``|C(0)|``
DEFAULT_FIT_TOL: Final = 5e-2

#: Number of samples of the correlation function used in a fit
DEFAULT_FIT_SAMPLES: Final = 400

#: Rounds of the residual reweighting pushing a fit towards the minimax one
REWEIGHTING_ROUNDS: Final = 12

#: Fit window in units of the inverse cutoff
DEFAULT_FIT_WINDOW_CUTOFF_TIMES: Final = 20.0

#: Fit window in units of the inverse temperature
DEFAULT_FIT_WINDOW_THERMAL_TIMES: Final = 4.0


def spectral_density(spec: BathSpec, omega: npt.ArrayLike) -> RealArray:
    """Evaluate ``J(ω)`` of the bath family."""
    omega_array = np.asarray(omega, dtype=np.float64)
    return omega_array * _density_over_omega(spec, omega_array)


def _density_over_omega(spec: BathSpec, omega: RealArray) -> RealArray:
    """Evaluate ``J(ω)/ω``, which is finite at zero for both families."""
    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        return np.asarray(
            spec.lam * spec.omega_c / (spec.omega_c**2 + omega**2), dtype=np.float64
        )

    if spec.family is BathFamily.OHMIC_EXP:
        return np.asarray(spec.lam * np.exp(-omega / spec.omega_c), dtype=np.float64)

    assert_never(spec.family)


def _thermal_density(spec: BathSpec, omega: float) -> float:
    """Evaluate ``J(ω) coth(βω/2)``."""
    ratio = float(_density_over_omega(spec, np.array(omega)))
    if omega < SERIES_THRESHOLD * spec.omega_c:
        return ratio * (2.0 / spec.beta + spec.beta * omega * omega / 6.0)

    return ratio * omega / math.tanh(0.5 * spec.beta * omega)


def _cutoff_frequency(spec: BathSpec) -> float:
    if spec.family is BathFamily.OHMIC_EXP:
        return OHMIC_CUTOFF_MULTIPLE * spec.omega_c

    raise ValueError(
        f"Quadrature over the {spec.family.value} density is not supported, "
        f"its kernel is given in closed form"
    )


def _integrate(
    function: Callable[[float], float],
    lower: float,
    upper: float,
    scale: float,
    weight: Optional[str] = None,
    wvar: Optional[float] = None,
) -> float:
    """
    Integrate ``function`` with adaptive Gauss-Kronrod rules.

    Oscillatory weights ``cos(wvar ω)`` and ``sin(wvar ω)`` are handled by
    the dedicated rules of QUADPACK.
    """
    if upper <= lower:
        return 0.0

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.integrate.IntegrationWarning)
        if weight is None:
            value, error = scipy.integrate.quad(
                function,
                lower,
                upper,
                epsabs=1e-12 * scale,
                epsrel=1e-10,
                limit=1000,
            )
        else:
            value, error = scipy.integrate.quad(
                function,
                lower,
                upper,
                weight=weight,
                wvar=wvar,
                epsabs=1e-12 * scale,
                epsrel=1e-10,
                limit=1000,
                maxp1=200,
            )

    if error > QUADRATURE_TOL * scale:
        raise QuadratureError(
            f"The frequency integral over [{lower}, {upper}] did not converge: "
            f"estimated error {error:.3e} exceeds {QUADRATURE_TOL} "
            f"relative to the scale {scale:.3e}"
        )

    return float(value)


@functools.lru_cache(maxsize=64)
def _correlation_scale(
    family: BathFamily, lam: float, omega_c: float, beta: float
) -> float:
    spec = _bare_spec(family, lam, omega_c, beta)
    upper = _cutoff_frequency(spec)
    real = scipy.integrate.quad(
        lambda omega: _thermal_density(spec, omega), 0.0, upper, limit=1000
    )[0]
    imag = scipy.integrate.quad(
        lambda omega: float(spectral_density(spec, omega)), 0.0, upper, limit=1000
    )[0]
    return abs(real) + abs(imag)


def _bare_spec(
    family: BathFamily, lam: float, omega_c: float, beta: float
) -> BathSpec:
    """Give a spec with a placeholder expansion, used only for quadratures."""
    if family is BathFamily.DRUDE_LORENTZ_HT:
        return drude_lorentz_bath(lam=lam, omega_c=omega_c, beta=beta)

    return BathSpec(
        family=family,
        lam=lam,
        omega_c=omega_c,
        beta=beta,
        expansion=[ExponentialTerm(amplitude=0.0, rate=1.0)],
    )


def _scale_of(spec: BathSpec) -> float:
    return _correlation_scale(spec.family, spec.lam, spec.omega_c, spec.beta)


def _quadrature_correlation(spec: BathSpec, t: float) -> complex:
    upper = _cutoff_frequency(spec)
    scale = _scale_of(spec)

    def thermal(omega: float) -> float:
        return _thermal_density(spec, omega)

    def density(omega: float) -> float:
        return float(spectral_density(spec, omega))

    if t == 0.0:
        return complex(_integrate(thermal, 0.0, upper, scale), 0.0)

    real = _integrate(thermal, 0.0, upper, scale, weight="cos", wvar=t)
    imag = -_integrate(density, 0.0, upper, scale, weight="sin", wvar=t)
    return complex(real, imag)


@require(lambda t: t >= 0.0)
def correlation_function(spec: BathSpec, t: float) -> complex:
    """
    Evaluate the bath correlation function ``C(t)``.

    The Drude-Lorentz family is evaluated from its closed-form kernel, the
    ohmic family by quadrature independently of its fitted expansion.
    """
    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        term = spec.expansion[0]
        return complex(term.amplitude * np.exp(-term.rate * t))

    if spec.family is BathFamily.OHMIC_EXP:
        return _quadrature_correlation(spec, t)

    assert_never(spec.family)


@require(lambda times: bool(np.all(np.asarray(times) >= 0.0)))
def correlation_samples(spec: BathSpec, times: npt.ArrayLike) -> ComplexArray:
    """Evaluate :py:func:`correlation_function` at every time point."""
    times_array = np.asarray(times, dtype=np.float64)
    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        return spec.expansion_at(times_array)

    return np.array(
        [correlation_function(spec, float(t)) for t in times_array.ravel()],
        dtype=np.complex128,
    ).reshape(times_array.shape)


@ensure(lambda result: result > 0.0)
def reorganization_energy(spec: BathSpec) -> float:
    """Compute ``∫₀^∞ dω J(ω)/ω`` in closed form."""
    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        return spec.lam * math.pi / 2.0

    if spec.family is BathFamily.OHMIC_EXP:
        return spec.lam * spec.omega_c

    assert_never(spec.family)


def _one_minus_cos_over_square(omega: float, t: float) -> float:
    """Evaluate ``(1 − cos ωt)/ω²`` without cancellation."""
    if omega == 0.0:
        return 0.5 * t * t

    half = 0.5 * omega * t
    return 2.0 * (math.sin(half) / omega) ** 2


def _sin_minus_linear_over_omega(omega: float, t: float) -> float:
    """Evaluate ``(sin ωt − ωt)/ω`` without cancellation."""
    x = omega * t
    if abs(x) < 1e-3:
        return t * (-(x**2) / 6.0 + x**4 / 120.0)

    return (math.sin(x) - x) / omega


def _quadrature_lineshape(spec: BathSpec, t: float) -> complex:
    upper = _cutoff_frequency(spec)

    def ratio(omega: float) -> float:
        return float(_density_over_omega(spec, np.array(omega)))

    # Below the split the integrand is smooth; above it the oscillating
    # factors are handed to the weighted rules.
    split = min(upper, math.pi / t)

    def real_near(omega: float) -> float:
        return _thermal_density(spec, omega) * _one_minus_cos_over_square(omega, t)

    def imag_near(omega: float) -> float:
        return ratio(omega) * _sin_minus_linear_over_omega(omega, t)

    def thermal_over_square(omega: float) -> float:
        return _thermal_density(spec, omega) / (omega * omega)

    def density_over_square(omega: float) -> float:
        return ratio(omega) / omega

    scale = _scale_of(spec) * max(t * t, t / spec.omega_c)

    real = _integrate(real_near, 0.0, split, scale)
    imag = _integrate(imag_near, 0.0, split, scale)

    if split < upper:
        real += _integrate(thermal_over_square, split, upper, scale)
        real -= _integrate(
            thermal_over_square, split, upper, scale, weight="cos", wvar=t
        )
        imag += _integrate(
            density_over_square, split, upper, scale, weight="sin", wvar=t
        )
        imag -= t * _integrate(ratio, split, upper, scale)

    return complex(real, imag)


def _kernel_lineshape(spec: BathSpec, t: float) -> complex:
    """Integrate the exponential expansion twice in closed form."""
    result = 0.0j
    for term in spec.expansion:
        rate = term.rate
        result += term.amplitude / rate**2 * (np.exp(-rate * t) + rate * t - 1.0)
    return complex(result)


@require(lambda t: t >= 0.0)
def lineshape_function(spec: BathSpec, t: float) -> complex:
    """
    Compute ``g(t) = ∫₀^t ds (t − s) C(s)``.

    The Drude-Lorentz family uses its exponential kernel, so that the
    lineshape is consistent with a hierarchy built on the same kernel.
    """
    if t == 0.0:
        return 0.0j

    if spec.family is BathFamily.DRUDE_LORENTZ_HT:
        return _kernel_lineshape(spec, t)

    if spec.family is BathFamily.OHMIC_EXP:
        return _quadrature_lineshape(spec, t)

    assert_never(spec.family)


def lineshape_samples(spec: BathSpec, times: npt.ArrayLike) -> ComplexArray:
    """Evaluate :py:func:`lineshape_function` at every time point."""
    times_array = np.asarray(times, dtype=np.float64)
    return np.array(
        [lineshape_function(spec, float(t)) for t in times_array.ravel()],
        dtype=np.complex128,
    ).reshape(times_array.shape)


# region Exponential fits


@invariant(lambda self: len(self.terms) >= 1)
@invariant(lambda self: all(term.rate.real > 0.0 for term in self.terms))
@invariant(lambda self: self.residual >= 0.0)
class ExpansionFit(DBC):
    """Represent a sum of decaying exponentials fitted to a sampled function."""

    #: Terms ordered by the real part of their rates
    terms: Final[Tuple[ExponentialTerm, ...]]

    #: Largest absolute deviation over the fit window
    residual: Final[float]

    #: End of the fit window
    t_max: Final[float]

    def __init__(
        self, terms: List[ExponentialTerm], residual: float, t_max: float
    ) -> None:
        """Initialize with the given values."""
        self.terms = tuple(terms)
        self.residual = residual
        self.t_max = t_max

    def __call__(self, times: npt.ArrayLike) -> ComplexArray:
        """Evaluate the fitted sum at ``times``."""
        times_array = np.asarray(times, dtype=np.float64)
        result = np.zeros(times_array.shape, dtype=np.complex128)
        for term in self.terms:
            result += term(times_array)
        return result


def fit_to_jsonable(fit: ExpansionFit) -> MutableMapping[str, Any]:
    """Convert ``fit`` to a JSON-able mapping."""
    return {
        "terms": [
            {
                "a_re": term.amplitude.real,
                "a_im": term.amplitude.imag,
                "nu_re": term.rate.real,
                "nu_im": term.rate.imag,
            }
            for term in fit.terms
        ],
        "residual": fit.residual,
        "t_max": fit.t_max,
    }


def fit_from_jsonable(jsonable: Mapping[str, Any]) -> ExpansionFit:
    """Parse the mapping produced by :py:func:`fit_to_jsonable`."""
    return ExpansionFit(
        terms=[
            ExponentialTerm(
                amplitude=complex(term["a_re"], term["a_im"]),
                rate=complex(term["nu_re"], term["nu_im"]),
            )
            for term in jsonable["terms"]
        ],
        residual=float(jsonable["residual"]),
        t_max=float(jsonable["t_max"]),
    )


def _basis(rates: ComplexArray, times: RealArray) -> ComplexArray:
    return np.asarray(np.exp(-np.outer(times, rates)), dtype=np.complex128)


def _amplitudes(
    rates: ComplexArray,
    times: RealArray,
    values: ComplexArray,
    weights: Optional[RealArray] = None,
) -> ComplexArray:
    basis = _basis(rates, times)
    if weights is not None:
        root = np.sqrt(weights)
        basis = basis * root[:, np.newaxis]
        values = values * root

    amplitudes, _, _, _ = np.linalg.lstsq(basis, values, rcond=None)
    return np.asarray(amplitudes, dtype=np.complex128)


def _pencil_rates(
    values: ComplexArray, dt: float, n_terms: int, pencil: Optional[int] = None
) -> ComplexArray:
    """Estimate the rates by the matrix pencil of the sample Hankel matrix."""
    count = len(values)
    if pencil is None:
        pencil = count // 2

    hankel = scipy.linalg.hankel(
        values[: count - pencil], values[count - pencil - 1 :]
    )
    _, _, vh = np.linalg.svd(hankel, full_matrices=False)
    # The rows of vh conjugated span the signal subspace of the poles.
    dominant = vh[:n_terms, :].T

    shift = np.linalg.pinv(dominant[:-1, :]) @ dominant[1:, :]
    poles = np.linalg.eigvals(shift)
    poles = np.where(np.abs(poles) < 1e-300, 1e-300, poles)
    return np.asarray(-np.log(poles) / dt, dtype=np.complex128)


def _pencil_seeds(values: ComplexArray, dt: float, n_terms: int) -> List[ComplexArray]:
    """
    Collect the pencil estimates of the rates from several Hankel shapes.

    The first seed is the square pencil over all the samples. The others use
    narrower pencils and the leading half of the samples.
    """
    count = len(values)
    seeds = [_pencil_rates(values, dt, n_terms)]

    for divisor in (3, 4):
        pencil = count // divisor
        if n_terms < pencil and count - pencil > n_terms:
            seeds.append(_pencil_rates(values, dt, n_terms, pencil=pencil))

    half = count // 2
    if half >= 2 * n_terms + 2:
        seeds.append(_pencil_rates(values[:half], dt, n_terms))

    return seeds


def _clamp_rates(rates: ComplexArray, dt: float, t_max: float) -> ComplexArray:
    lowest = 0.1 / t_max
    highest = 50.0 / dt
    return np.asarray(
        np.clip(rates.real, lowest, highest) + 1j * rates.imag, dtype=np.complex128
    )


def _refine_rates(
    start: ComplexArray,
    times: RealArray,
    values: ComplexArray,
    weights: Optional[RealArray],
) -> ComplexArray:
    """Optimize the rates by variable projection with the weighted residual."""
    n_terms = len(start)
    root = None if weights is None else np.sqrt(weights)

    def unpack(parameters: RealArray) -> ComplexArray:
        return np.asarray(
            np.exp(parameters[:n_terms]) + 1j * parameters[n_terms:],
            dtype=np.complex128,
        )

    def residuals(parameters: RealArray) -> RealArray:
        rates = unpack(parameters)
        deviation = values - _basis(rates, times) @ _amplitudes(
            rates, times, values, weights
        )
        if root is not None:
            deviation = deviation * root
        return np.concatenate([deviation.real, deviation.imag])

    initial = np.concatenate([np.log(start.real), start.imag])
    solution = scipy.optimize.least_squares(
        residuals, initial, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15
    )
    return unpack(solution.x)


class _Candidate:
    """Keep the best rates found so far as measured by the max deviation."""

    def __init__(self, times: RealArray, values: ComplexArray) -> None:
        self.times = times
        self.values = values
        self.residual = math.inf
        self.rates = np.zeros(0, dtype=np.complex128)
        self.amplitudes = np.zeros(0, dtype=np.complex128)

    def offer(
        self, rates: ComplexArray, weights: Optional[RealArray] = None
    ) -> Tuple[float, ComplexArray]:
        """Record ``rates`` if they improve the fit; return their deviation."""
        amplitudes = _amplitudes(rates, self.times, self.values, weights)
        deviation = self.values - _basis(rates, self.times) @ amplitudes
        residual = float(np.max(np.abs(deviation)))
        if residual < self.residual:
            self.residual = residual
            self.rates = rates
            self.amplitudes = amplitudes
        return residual, np.asarray(np.abs(deviation), dtype=np.float64)


@require(lambda n_terms: n_terms >= 1)
@require(lambda tol: tol > 0.0)
@require(
    lambda samples, n_terms: len(samples) >= 2 * n_terms + 2,
    "Enough samples to determine the terms",
)
@ensure(lambda tol, result: result.residual <= tol)
def fit_exponentials(
    samples: ComplexTimeSeries, n_terms: int, tol: float
) -> ExpansionFit:
    """
    Fit ``Σ a_k exp(-ν_k t)`` with ``Re ν_k > 0`` to the ``samples``.

    The rates are seeded by matrix pencils of several shapes and refined by
    variable projection: the amplitudes are eliminated by linear least squares
    and the rates are optimized on the remaining residual. The refined rates
    are then reweighted by the pointwise deviation (Lawson iteration) to lower
    the largest deviation, which is the reported residual.

    :raise: :py:class:`FitError` with the best residual if ``tol`` is missed
    """
    times = samples.times
    values = samples.values
    dt = samples.dt
    t_max = float(times[-1])

    best = _Candidate(times, values)

    for seed in _pencil_seeds(values, dt, n_terms):
        seed = _clamp_rates(seed, dt, t_max)
        best.offer(seed)
        if best.residual <= 0.0:
            break

        rates = _clamp_rates(_refine_rates(seed, times, values, None), dt, t_max)
        _, deviation = best.offer(rates)

        weights = np.full(len(times), 1.0 / len(times))
        for _ in range(REWEIGHTING_ROUNDS):
            weights = weights * np.maximum(deviation, 1e-300)
            weights = weights / np.sum(weights)
            rates = _clamp_rates(
                _refine_rates(rates, times, values, weights), dt, t_max
            )
            _, deviation = best.offer(rates, weights)

        if best.residual <= tol:
            break

    LOGGER.debug(
        "Fitted %d exponential terms with the residual %.3e", n_terms, best.residual
    )

    if best.residual > tol:
        raise FitError(
            f"Could not fit {n_terms} exponential terms to the tolerance {tol:.3e}; "
            f"the best residual is {best.residual:.3e}",
            residual=best.residual,
        )

    order = np.argsort(best.rates.real, kind="stable")
    return ExpansionFit(
        terms=[
            ExponentialTerm(amplitude=best.amplitudes[k], rate=best.rates[k])
            for k in order
        ],
        residual=best.residual,
        t_max=t_max,
    )


def default_fit_window(omega_c: float, beta: float) -> float:
    """Give the fit window covering the decay of an ohmic kernel."""
    return max(
        DEFAULT_FIT_WINDOW_CUTOFF_TIMES / omega_c,
        DEFAULT_FIT_WINDOW_THERMAL_TIMES * beta,
    )


@functools.lru_cache(maxsize=32)
def _fitted_ohmic_bath(
    lam: float,
    omega_c: float,
    beta: float,
    n_terms: int,
    tol: float,
    t_max: float,
    n_samples: int,
) -> BathSpec:
    bare = _bare_spec(BathFamily.OHMIC_EXP, lam, omega_c, beta)
    dt = t_max / (n_samples - 1)
    samples = ComplexTimeSeries(
        dt=dt, values=correlation_samples(bare, dt * np.arange(n_samples))
    )
    absolute_tol = tol * abs(samples.values[0])
    fit = fit_exponentials(samples, n_terms=n_terms, tol=absolute_tol)

    LOGGER.info(
        "Fitted the ohmic kernel (lambda=%g, omega_c=%g, beta=%g) with %d terms, "
        "residual %.3e relative to |C(0)|",
        lam,
        omega_c,
        beta,
        n_terms,
        fit.residual / abs(samples.values[0]),
    )

    return BathSpec(
        family=BathFamily.OHMIC_EXP,
        lam=lam,
        omega_c=omega_c,
        beta=beta,
        expansion=fit.terms,
        residual=fit.residual,
        t_max=fit.t_max,
    )


@require(lambda lam, omega_c, beta: lam > 0.0 and omega_c > 0.0 and beta > 0.0)
@require(lambda n_terms: n_terms >= 1)
def make_bath_spec(
    family: BathFamily,
    lam: float,
    omega_c: float,
    beta: float,
    n_terms: int = DEFAULT_N_TERMS,
    tol: float = DEFAULT_FIT_TOL,
    t_max: Optional[float] = None,
    n_samples: int = DEFAULT_FIT_SAMPLES,
) -> BathSpec:
    """
    Specify a bath with the exponential expansion its hierarchy needs.

    The Drude-Lorentz family has its closed-form kernel. The ohmic kernel is
    fitted with ``n_terms`` exponentials over ``[0, t_max]``; ``tol`` is
    relative to ``|C(0)|``.
    """
    if family is BathFamily.DRUDE_LORENTZ_HT:
        return drude_lorentz_bath(lam=lam, omega_c=omega_c, beta=beta)

    if family is BathFamily.OHMIC_EXP:
        window = t_max if t_max is not None else default_fit_window(omega_c, beta)
        return _fitted_ohmic_bath(
            float(lam),
            float(omega_c),
            float(beta),
            int(n_terms),
            float(tol),
            float(window),
            int(n_samples),
        )

    assert_never(family)


# endregion
