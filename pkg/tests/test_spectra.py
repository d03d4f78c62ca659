import json
import pathlib
import tempfile
import unittest
from typing import List, Optional, Tuple

import icontract
import numpy as np

from kernelforge import oracle, spectra, ttm
from kernelforge.common import ThermometryError, make_time_grid, steps_in
from kernelforge.models import (
    HamiltonianModel,
    ModelKind,
    ModelParameters,
    build_model,
)
from kernelforge.operators import ComplexTimeSeries, CorrelationKind, Trajectory

import tests.common

# pylint: disable=missing-docstring


def _damped_series(
    frequency: float, kind: CorrelationKind, rate: float = 0.5
) -> ComplexTimeSeries:
    dt = 0.05
    times = make_time_grid(dt, 3999)
    return ComplexTimeSeries(
        dt=dt, values=np.exp(1.0j * frequency * times - rate * times), kind=kind
    )


def _two_gaussians() -> spectra.Spectrum:
    omega = np.linspace(-3.0, 3.0, 601)
    values = np.exp(-((omega + 1.0) ** 2) / 0.1) + 0.5 * np.exp(
        -((omega - 1.0) ** 2) / 0.1
    )
    return spectra.Spectrum(
        omega=omega, values=values, kind=None, window_rate=None, pad_factor=1
    )


class Test_spectrum(unittest.TestCase):
    def test_absorption_peak_at_positive_frequency(self) -> None:
        result = spectra.spectrum(
            _damped_series(-2.0, CorrelationKind.ABSORPTION), window=None
        )
        self.assertEqual(4000, len(result.omega))
        self.assertIs(CorrelationKind.ABSORPTION, result.kind)
        self.assertIsNone(result.window_rate)

        peaks = spectra.find_peaks(result)
        self.assertEqual(1, len(peaks))
        self.assertAlmostEqual(2.0, peaks[0].omega, delta=0.02)
        # 2 Re ∫ exp(-γt) dt = 2/γ at the center of the line
        self.assertAlmostEqual(4.0, peaks[0].height, delta=0.04)

    def test_emission_peak_at_positive_frequency(self) -> None:
        result = spectra.spectrum(
            _damped_series(2.0, CorrelationKind.EMISSION), window=None
        )
        peaks = spectra.find_peaks(result)
        self.assertEqual(1, len(peaks))
        self.assertAlmostEqual(2.0, peaks[0].omega, delta=0.02)

    def test_series_without_kind_is_absorption(self) -> None:
        with_kind = spectra.spectrum(_damped_series(-1.0, CorrelationKind.ABSORPTION))
        series = _damped_series(-1.0, CorrelationKind.ABSORPTION)
        without_kind = spectra.spectrum(
            ComplexTimeSeries(dt=series.dt, values=series.values)
        )
        np.testing.assert_array_equal(with_kind.values, without_kind.values)

    def test_window_and_padding(self) -> None:
        series = _damped_series(-1.0, CorrelationKind.ABSORPTION, rate=0.0)
        result = spectra.spectrum(
            series, window=spectra.ExponentialWindow(rate=0.1), pad_factor=2
        )
        self.assertEqual(8000, len(result.omega))
        self.assertEqual(0.1, result.window_rate)
        self.assertEqual(2, result.pad_factor)
        self.assertTrue(np.all(np.diff(result.omega) > 0.0))

        peak = spectra.find_peaks(result)[0]
        self.assertAlmostEqual(1.0, peak.omega, delta=0.02)

    def test_invalid_window(self) -> None:
        with self.assertRaises(icontract.ViolationError):
            spectra.ExponentialWindow(rate=0.0)

    def test_csv(self) -> None:
        result = spectra.spectrum(
            _damped_series(-1.0, CorrelationKind.ABSORPTION), window=None
        )
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = pathlib.Path(tmp_dir) / "spectrum_abs.csv"
            spectra.write_spectrum_csv(result, path)
            table = np.loadtxt(str(path), delimiter=",", skiprows=1)
            header = path.read_text(encoding="utf-8").splitlines()[0]

        self.assertEqual("omega,value", header)
        np.testing.assert_array_equal(table[:, 0], result.omega)
        np.testing.assert_array_equal(table[:, 1], result.values)


class Test_features(unittest.TestCase):
    def test_peaks_sorted_by_frequency(self) -> None:
        peaks = spectra.find_peaks(_two_gaussians())
        self.assertEqual(2, len(peaks))
        self.assertAlmostEqual(-1.0, peaks[0].omega, places=6)
        self.assertAlmostEqual(1.0, peaks[1].omega, places=6)
        self.assertGreater(peaks[0].height, peaks[1].height)

    def test_dip_between_peaks(self) -> None:
        dip = spectra.find_dip(_two_gaussians(), near=0.0)
        assert dip is not None
        self.assertLess(abs(dip.omega), 0.1)
        self.assertGreater(dip.contrast, 0.99)

    def test_no_dip_with_a_single_peak(self) -> None:
        omega = np.linspace(-3.0, 3.0, 601)
        single = spectra.Spectrum(
            omega=omega,
            values=np.exp(-(omega**2)),
            kind=None,
            window_rate=None,
            pad_factor=1,
        )
        self.assertIsNone(spectra.find_dip(single, near=0.0))


def _detailed_balance_pair(beta: float, offset: float) -> tuple:
    omega = np.linspace(-3.0, 5.0, 161)
    absorption = np.exp(-((omega - 1.0) ** 2))
    emission = absorption * np.exp(-beta * omega - offset)
    return (
        spectra.Spectrum(
            omega=omega,
            values=absorption,
            kind=CorrelationKind.ABSORPTION,
            window_rate=None,
            pad_factor=1,
        ),
        spectra.Spectrum(
            omega=omega,
            values=emission,
            kind=CorrelationKind.EMISSION,
            window_rate=None,
            pad_factor=1,
        ),
    )


class Test_estimate_beta(unittest.TestCase):
    def test_exact_ratio(self) -> None:
        absorption, emission = _detailed_balance_pair(beta=2.0, offset=0.3)
        result = spectra.estimate_beta(absorption, emission)

        self.assertAlmostEqual(2.0, result.beta, places=8)
        self.assertAlmostEqual(0.3, result.offset, places=8)
        self.assertAlmostEqual(np.exp(0.3), result.partition_ratio, places=8)
        self.assertLess(result.stderr, 1e-8)
        self.assertGreaterEqual(result.n_points, spectra.MIN_THERMOMETRY_POINTS)

    def test_too_few_points(self) -> None:
        absorption, emission = _detailed_balance_pair(beta=2.0, offset=0.3)
        with self.assertRaises(ThermometryError):
            spectra.estimate_beta(absorption, emission, floor=0.999)

    def test_json_report(self) -> None:
        absorption, emission = _detailed_balance_pair(beta=1.0, offset=0.0)
        result = spectra.estimate_beta(absorption, emission)
        jsonable = spectra.thermometry_to_jsonable(
            result, window=spectra.ExponentialWindow(0.05), pad_factor=2, floor=1e-3
        )

        with tempfile.TemporaryDirectory() as tmp_dir:
            path = pathlib.Path(tmp_dir) / "thermometry.json"
            spectra.write_thermometry_json(jsonable, path)
            loaded = json.loads(path.read_text(encoding="utf-8"))

        self.assertAlmostEqual(1.0, loaded["beta"], places=8)
        self.assertEqual({"kind": "exponential", "rate": 0.05}, loaded["window"])
        self.assertEqual(2, loaded["pad_factor"])
        self.assertEqual(result.n_points, loaded["n_points"])

    @unittest.skipUnless(
        tests.common.slow_tests_enabled(), "Set KERNELFORGE_SLOW to run slow tests"
    )
    def test_monomer_in_ohmic_bath(self) -> None:
        spec = tests.common.ohmic(lam=0.1, omega_c=1.0, beta=1.0)
        times = make_time_grid(0.05, 1999)
        series = {
            kind: ComplexTimeSeries(
                dt=0.05,
                values=oracle.monomer_correlation_samples(1.0, spec, kind, times),
                kind=kind,
            )
            for kind in CorrelationKind
        }
        result = spectra.estimate_beta(
            spectra.spectrum(series[CorrelationKind.ABSORPTION], window=None),
            spectra.spectrum(series[CorrelationKind.EMISSION], window=None),
            floor=1e-2,
        )
        self.assertAlmostEqual(1.0, result.beta, delta=0.05)


class Test_kms_residual(unittest.TestCase):
    def _decaying(self) -> Trajectory:
        times = make_time_grid(0.05, 799)
        return Trajectory(times=times, values=np.exp(-times)[:, None, None])

    def test_identical_real_functions_at_infinite_temperature(self) -> None:
        trajectory = self._decaying()
        residual = spectra.kms_residual(
            trajectory, trajectory, beta=0.0, log_z_ratio=0.0
        )
        self.assertLess(residual, 1e-12)

    def test_violation_is_measured(self) -> None:
        trajectory = self._decaying()
        residual = spectra.kms_residual(
            trajectory, trajectory, beta=1.0, log_z_ratio=0.0
        )
        self.assertGreater(residual, 0.1)


def _uncoupled_dimer_samplers(n_steps: int) -> tuple:
    spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=1.0)
    model = tests.common.chromophoric(spec, site_energies=[1.0, 1.5])
    times = make_time_grid(0.1, n_steps)
    return spec, model, oracle.analytic_block_samplers(model, times)


class Test_reduced_operators(unittest.TestCase):
    def test_absorption_of_uncoupled_dimer(self) -> None:
        spec, model, samplers = _uncoupled_dimer_samplers(n_steps=100)
        result = spectra.reduced_operator_trajectory(
            model,
            CorrelationKind.ABSORPTION,
            samplers,
            dt=0.1,
            tau_sample=10.0,
            t_total=30.0,
        )
        self.assertTrue(result.report.passed)
        self.assertEqual((301, 2, 2), result.trajectory.values.shape)
        np.testing.assert_array_equal(result.trajectory.values[:, 0, 1], 0.0)

        expected = oracle.aggregate_correlation_samples(
            [1.0, 1.5],
            spec,
            CorrelationKind.ABSORPTION,
            1.0,
            make_time_grid(0.1, 300),
        )
        np.testing.assert_allclose(result.correlation.values, expected, atol=1e-5)
        self.assertIs(CorrelationKind.ABSORPTION, result.correlation.kind)

    def test_emission_reuses_absorption_tensors(self) -> None:
        spec, model, samplers = _uncoupled_dimer_samplers(n_steps=100)
        absorption = spectra.learn_block(
            model, CorrelationKind.ABSORPTION, samplers, dt=0.1, tau_sample=10.0
        )
        self.assertEqual([], list(absorption.inhomogeneities))

        result = spectra.reduced_operator_trajectory(
            model,
            CorrelationKind.EMISSION,
            samplers,
            dt=0.1,
            tau_sample=10.0,
            t_total=30.0,
            tensors=absorption.tensors,
        )
        self.assertIs(absorption.tensors, result.tensors)
        self.assertTrue(result.report.passed)

        expected = oracle.aggregate_correlation_samples(
            [1.0, 1.5],
            spec,
            CorrelationKind.EMISSION,
            1.0,
            make_time_grid(0.1, 300),
        )
        np.testing.assert_allclose(result.correlation.values, expected, atol=1e-4)

    def test_single_point_sample_neglects_correlations(self) -> None:
        _, model, samplers = _uncoupled_dimer_samplers(n_steps=50)
        learned = spectra.learn_block(
            model,
            CorrelationKind.EMISSION,
            samplers,
            dt=0.1,
            tau_sample=5.0,
            sample_length=1,
        )
        self.assertEqual([1, 1], [len(sample) for sample in learned.samples])
        self.assertEqual(0, len(learned.report.inhom_norms))

    def test_direct_correlation(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=1.0)
        model = tests.common.chromophoric(spec, site_energies=[1.0])
        times = make_time_grid(0.1, 50)
        samplers = oracle.analytic_block_samplers(model, times)

        for kind in CorrelationKind:
            series = spectra.direct_correlation(model, kind, samplers)
            self.assertEqual(51, len(series))
            np.testing.assert_allclose(
                series.values,
                oracle.monomer_correlation_samples(1.0, spec, kind, times),
                atol=1e-12,
            )


class Test_hierarchy_samplers(unittest.TestCase):
    def test_stokes_shift_of_monomer(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=1.0)
        model = tests.common.chromophoric(spec, site_energies=[1.0])
        dt = 0.01
        samplers = spectra.hierarchy_samplers(
            model, make_time_grid(dt, 20), depth=4
        )

        absorption = spectra.direct_correlation(
            model, CorrelationKind.ABSORPTION, samplers
        )
        emission = spectra.direct_correlation(model, CorrelationKind.EMISSION, samplers)
        self.assertAlmostEqual(1.0, emission.values[0], places=6)
        self.assertAlmostEqual(1.0, absorption.values[0], places=12)

        # Initial phase velocities give the vertical transition energies.
        absorption_energy = -float(np.angle(absorption.values[1])) / dt
        emission_energy = float(np.angle(emission.values[1])) / dt
        self.assertAlmostEqual(1.0, absorption_energy, delta=0.02)
        self.assertAlmostEqual(
            2.0 * 0.1 * np.pi / 2.0, absorption_energy - emission_energy, delta=0.05
        )


def _geometric_block(
    dt: float, pole: complex
) -> Tuple[HamiltonianModel, spectra.LearnedBlock]:
    """Give a monomer whose coherence follows ``y_n = pole^n`` for ever."""
    model = tests.common.chromophoric(tests.common.drude(), site_energies=[1.0])
    block = spectra.coherence_block(model)
    tensors = ttm.TransferTensors(dt, np.array([[[pole]]]), block)
    sample = Trajectory(
        times=np.zeros(1), values=block.embed(np.ones(1, dtype=np.complex128))[None]
    )
    learned = spectra.LearnedBlock(
        kind=CorrelationKind.ABSORPTION,
        tensors=tensors,
        samples=[sample],
        inhomogeneities=[],
        report=ttm.decay_report(tensors, None),
    )
    return model, learned


class Test_tensor_spectrum(unittest.TestCase):
    def test_geometric_continuation(self) -> None:
        dt = 0.05
        pole = np.exp((-1.0j - 0.2) * dt)
        model, learned = _geometric_block(dt, pole)

        result = spectra.tensor_spectrum(model, learned, n_points=8192)
        self.assertIs(CorrelationKind.ABSORPTION, result.kind)
        self.assertIsNone(result.window_rate)

        # Σ_n (pole z)^n = 1 / (1 - pole z) on the unit circle
        z = np.exp(1.0j * result.omega * dt)
        expected = 2.0 * (dt * (1.0 / (1.0 - pole * z) - 0.5)).real
        np.testing.assert_allclose(result.values, expected, rtol=1e-9)

        peaks = spectra.find_peaks(result)
        self.assertEqual(1, len(peaks))
        self.assertAlmostEqual(1.0, peaks[0].omega, delta=0.01)

    def test_window_damps_a_line_that_never_decays(self) -> None:
        dt = 0.05
        pole = np.exp(-1.0j * dt)
        model, learned = _geometric_block(dt, pole)

        result = spectra.tensor_spectrum(
            model, learned, n_points=8192, window=spectra.ExponentialWindow(0.1)
        )
        self.assertEqual(0.1, result.window_rate)

        damped = pole * np.exp(-0.1 * dt)
        z = np.exp(1.0j * result.omega * dt)
        expected = 2.0 * (dt * (1.0 / (1.0 - damped * z) - 0.5)).real
        np.testing.assert_allclose(result.values, expected, rtol=1e-9)

    def test_grid_shorter_than_the_memory(self) -> None:
        dt = 0.1
        model, learned = _geometric_block(dt, np.exp(-1.0j * dt))
        with self.assertRaises(icontract.ViolationError):
            spectra.tensor_spectrum(model, learned, n_points=1)

    def test_agrees_with_the_transform_of_a_long_continuation(self) -> None:
        _, model, samplers = _uncoupled_dimer_samplers(n_steps=100)
        absorption = spectra.reduced_operator_trajectory(
            model,
            CorrelationKind.ABSORPTION,
            samplers,
            dt=0.1,
            tau_sample=10.0,
            t_total=299.9,
        )
        emission = spectra.reduced_operator_trajectory(
            model,
            CorrelationKind.EMISSION,
            samplers,
            dt=0.1,
            tau_sample=10.0,
            t_total=299.9,
            tensors=absorption.tensors,
        )

        for result in (absorption, emission):
            # The lines have decayed by exp(-60) at the end of the continuation.
            expected = spectra.spectrum(result.correlation, window=None)
            computed = spectra.tensor_spectrum(
                model, result.learned, n_points=len(result.correlation)
            )
            self.assertIs(result.correlation.kind, computed.kind)
            np.testing.assert_array_equal(expected.omega, computed.omega)

            scale = float(np.max(np.abs(expected.values)))
            np.testing.assert_allclose(
                computed.values, expected.values, rtol=0.0, atol=1e-6 * scale
            )

    @unittest.skipUnless(
        tests.common.slow_tests_enabled(), "Set KERNELFORGE_SLOW to run slow tests"
    )
    def test_transparency_dip_of_the_lambda_model(self) -> None:
        dt = 0.05
        times = make_time_grid(dt, 600)

        contrasts = []  # type: List[float]
        for beta in (3.0, 1.0, 0.3):
            spec = tests.common.ohmic(lam=0.01, omega_c=10.0, beta=beta)
            model = build_model(
                ModelKind.EIT_LAMBDA, ModelParameters(bath=spec, eps=1.0)
            )
            learned = spectra.learn_block(
                model,
                CorrelationKind.ABSORPTION,
                spectra.hierarchy_samplers(model, times, depth=3),
                dt=dt,
                tau_sample=30.0,
            )
            result = spectra.tensor_spectrum(
                model, learned, n_points=2**17, window=spectra.ExponentialWindow(2e-4)
            )

            # Eigenvalues 4 ∓ √5 of the excited block
            peaks = [peak.omega for peak in spectra.find_peaks(result)]
            for eigenvalue in (4.0 - np.sqrt(5.0), 4.0 + np.sqrt(5.0)):
                self.assertLess(
                    min(abs(omega - eigenvalue) for omega in peaks), 0.15, peaks
                )

            # The bare zero at 2ε moves by the bath shifts of the order of 0.1ε.
            dip = spectra.find_dip(result, near=2.0)
            assert dip is not None
            self.assertAlmostEqual(2.0, dip.omega, delta=0.3)
            contrasts.append(dip.contrast)

        self.assertGreater(contrasts[0], contrasts[1])
        self.assertGreater(contrasts[1], contrasts[2])


def _uncoupled_dimer_emission_error(tau_sample: float) -> Tuple[float, float]:
    """Compare the emission continued from ``tau_sample`` to the closed form."""
    spec = tests.common.drude(lam=0.1, omega_c=2.0, beta=1.0)
    model = tests.common.chromophoric(spec, site_energies=[2.0, 1.0])
    dt = 0.1
    samplers = spectra.hierarchy_samplers(
        model, make_time_grid(dt, steps_in(tau_sample, dt)), depth=6
    )
    absorption = spectra.learn_block(
        model, CorrelationKind.ABSORPTION, samplers, dt=dt, tau_sample=tau_sample
    )
    emission = spectra.reduced_operator_trajectory(
        model,
        CorrelationKind.EMISSION,
        samplers,
        dt=dt,
        tau_sample=tau_sample,
        t_total=30.0,
        thresholds=ttm.DecayThresholds(tensor_tail=1.0, inhom_tail=1.0),
        tensors=absorption.tensors,
    )

    exact_values = oracle.aggregate_correlation_samples(
        [2.0, 1.0], spec, CorrelationKind.EMISSION, 1.0, make_time_grid(dt, 300)
    )
    values = emission.correlation.values
    correlation_error = float(
        np.linalg.norm(values - exact_values) / np.linalg.norm(exact_values)
    )

    exact = spectra.spectrum(
        ComplexTimeSeries(dt=dt, values=exact_values, kind=CorrelationKind.EMISSION)
    )
    continued = spectra.spectrum(emission.correlation)
    spectrum_error = float(
        np.linalg.norm(continued.values - exact.values) / np.linalg.norm(exact.values)
    )
    return correlation_error, spectrum_error


def _dimer_spectra(
    lam: float, beta: float, sample_length: Optional[int] = None
) -> Tuple[spectra.Spectrum, spectra.Spectrum]:
    """Compute the absorption and emission spectra of the coupled dimer."""
    spec = tests.common.ohmic(lam=lam, omega_c=2.0, beta=beta)
    model = tests.common.chromophoric(
        spec, site_energies=[2.0, 1.0], site_couplings=[(0, 1, 0.5)]
    )
    dt = 0.1
    tau_sample = 5.0
    samplers = spectra.hierarchy_samplers(
        model, make_time_grid(dt, steps_in(tau_sample, dt)), depth=3
    )
    absorption = spectra.learn_block(
        model, CorrelationKind.ABSORPTION, samplers, dt=dt, tau_sample=tau_sample
    )
    emission = spectra.learn_block(
        model,
        CorrelationKind.EMISSION,
        samplers,
        dt=dt,
        tau_sample=tau_sample,
        sample_length=sample_length,
        tensors=absorption.tensors,
    )
    return (
        spectra.tensor_spectrum(model, absorption, n_points=2**14),
        spectra.tensor_spectrum(model, emission, n_points=2**14),
    )


@unittest.skipUnless(
    tests.common.slow_tests_enabled(), "Set KERNELFORGE_SLOW to run slow tests"
)
class Test_hierarchy_pipeline(unittest.TestCase):
    def test_uncoupled_dimer_emission(self) -> None:
        errors = [_uncoupled_dimer_emission_error(tau) for tau in (1.0, 2.0, 3.0)]

        correlation_errors = [error for error, _ in errors]
        spectrum_errors = [error for _, error in errors]
        self.assertLess(correlation_errors[-1], 1e-2)
        self.assertGreater(spectrum_errors[0], spectrum_errors[1])
        self.assertGreater(spectrum_errors[1], spectrum_errors[2])

    def test_dimer_thermometry(self) -> None:
        absorption, emission = _dimer_spectra(lam=0.05, beta=1.0)

        # Excitonic energies 1.5 ± √0.5
        peaks = [peak.omega for peak in spectra.find_peaks(absorption)]
        for energy in (1.5 + np.sqrt(0.5), 1.5 - np.sqrt(0.5)):
            self.assertLess(min(abs(omega - energy) for omega in peaks), 0.1, peaks)

        result = spectra.estimate_beta(absorption, emission, floor=1e-2)
        self.assertAlmostEqual(1.0, result.beta, delta=0.025)

    def test_correlations_are_needed_for_the_temperature(self) -> None:
        correlated = spectra.estimate_beta(
            *_dimer_spectra(lam=0.1, beta=1.0), floor=1e-2
        )
        single_point = spectra.estimate_beta(
            *_dimer_spectra(lam=0.1, beta=1.0, sample_length=1), floor=1e-2
        )

        self.assertAlmostEqual(1.0, correlated.beta, delta=0.035)
        self.assertGreater(abs(single_point.beta - 1.0), abs(correlated.beta - 1.0))



if __name__ == "__main__":
    unittest.main()
