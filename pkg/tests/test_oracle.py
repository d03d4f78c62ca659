import unittest

import numpy as np

from kernelforge import bath, oracle
from kernelforge.common import OracleError, make_time_grid
from kernelforge.models import (
    PreparationParameters,
    PreparationRecipe,
    make_preparation,
)
from kernelforge.operators import CorrelationKind

import tests.common

# pylint: disable=missing-docstring


class Test_discretize_bath(unittest.TestCase):
    def test_ohmic_bins(self) -> None:
        spec = tests.common.ohmic(lam=0.1, omega_c=1.0, beta=1.0)
        discretized = oracle.discretize_bath(spec, n_modes=3, omega_max=12.0)

        np.testing.assert_allclose(discretized.frequencies, [2.0, 6.0, 10.0])
        # ∫_0^12 λ ω exp(-ω) dω
        expected = 0.1 * (1.0 - 13.0 * np.exp(-12.0))
        self.assertAlmostEqual(
            expected, float(np.sum(discretized.gammas**2)), places=7
        )
        self.assertEqual(oracle.DEFAULT_FOCK_CUTOFF, discretized.fock_cutoff)

    def test_drude_tail(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0)
        discretized = oracle.discretize_bath(spec, n_modes=2, omega_max=20.0)
        self.assertEqual(2, discretized.n_modes)

    def test_missing_weight(self) -> None:
        spec = tests.common.ohmic(lam=0.1, omega_c=1.0, beta=1.0)
        with self.assertRaises(OracleError):
            oracle.discretize_bath(spec, n_modes=3, omega_max=1.0)


def _weak_dephasing_oracle(lam: float) -> oracle.ExactOracle:
    spec = tests.common.drude(lam=lam, omega_c=1.0, beta=1.0)
    model = tests.common.pure_dephasing(spec, eps=1.0)
    discretized = oracle.discretize_bath(
        spec, n_modes=2, omega_max=20.0, fock_cutoff=3
    )
    return oracle.ExactOracle(model=model, baths=discretized)


class Test_ExactOracle(unittest.TestCase):
    def test_dimension_cap(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0)
        discretized = oracle.discretize_bath(
            spec, n_modes=3, omega_max=20.0, fock_cutoff=4
        )
        with self.assertRaises(OracleError):
            oracle.ExactOracle(
                model=tests.common.spin_boson(spec), baths=discretized, dim_cap=100
            )

    def test_fock_tail(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=0.1)
        discretized = oracle.discretize_bath(
            spec, n_modes=1, omega_max=20.0, fock_cutoff=2
        )
        with self.assertRaises(OracleError):
            oracle.ExactOracle(model=tests.common.spin_boson(spec), baths=discretized)

    def test_non_uniform_fock_cutoff(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0)
        model = tests.common.chromophoric(spec, site_energies=[1.0, 1.0])
        with self.assertRaises(OracleError):
            oracle.ExactOracle(
                model=model,
                baths=[
                    oracle.discretize_bath(spec, 1, 20.0, fock_cutoff=3),
                    oracle.discretize_bath(spec, 1, 20.0, fock_cutoff=4),
                ],
            )

    def test_states(self) -> None:
        exact = _weak_dephasing_oracle(lam=0.1)
        self.assertEqual(2 * 9, exact.total_dim)

        thermal = exact.thermal_state()
        self.assertAlmostEqual(1.0, abs(np.trace(thermal)))
        np.testing.assert_allclose(thermal, thermal.conj().T, atol=1e-13)

        rho = np.array([[0.25, 0.1j], [-0.1j, 0.75]])
        np.testing.assert_allclose(
            exact.partial_trace(exact.product_state(rho)), rho, atol=1e-14
        )

    def test_thermal_state_is_stationary(self) -> None:
        exact = _weak_dephasing_oracle(lam=0.1)
        trajectory = exact.evolve(exact.thermal_state(), make_time_grid(0.5, 10))
        for value in trajectory.values:
            np.testing.assert_allclose(value, trajectory.values[0], atol=1e-12)

    def test_weak_coupling_is_free_evolution(self) -> None:
        exact = _weak_dephasing_oracle(lam=1e-6)
        times = make_time_grid(0.1, 50)
        rho = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=np.complex128)

        trajectory = exact.product_sampler(times)(rho)
        np.testing.assert_allclose(
            trajectory.values[:, 0, 1], 0.5 * np.exp(-1.0j * times), atol=1e-5
        )

    def test_preparation_of_thermal_state(self) -> None:
        exact = _weak_dephasing_oracle(lam=0.1)
        preparation = make_preparation(
            PreparationRecipe.MEASUREMENT, PreparationParameters()
        )
        prepared = exact.prepared_state(preparation)
        self.assertAlmostEqual(1.0, np.trace(prepared).real)

        reduced = exact.partial_trace(prepared)
        np.testing.assert_allclose(
            reduced, [[0.5, -0.5j], [0.5j, 0.5]], atol=1e-12
        )


class Test_closed_forms(unittest.TestCase):
    def test_dephasing_decays(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=1.0)
        values = [
            oracle.analytic_dephasing_coherence(1.0, spec, 0.5, t)
            for t in (0.0, 1.0, 5.0)
        ]
        self.assertEqual(0.5, values[0])
        self.assertGreater(abs(values[1]), abs(values[2]))

    def test_monomer_correlation(self) -> None:
        spec = tests.common.drude(lam=0.1, omega_c=1.0, beta=1.0)
        for kind in CorrelationKind:
            self.assertEqual(
                1.0, oracle.analytic_monomer_correlation(1.0, spec, kind, 0.0)
            )

        t = 2.0
        emission = oracle.analytic_monomer_correlation(
            1.0, spec, CorrelationKind.EMISSION, t
        )
        reorganization = 0.1 * np.pi / 2.0
        expected = np.exp(
            1.0j * (1.0 - 2.0 * reorganization) * t - bath.lineshape_function(spec, t)
        )
        self.assertAlmostEqual(expected, emission)

    def test_excited_populations(self) -> None:
        spec = tests.common.drude()
        populations = oracle.excited_populations([1.0, 2.0], [spec, spec], beta=2.0)
        np.testing.assert_allclose(
            populations, np.array([1.0, np.exp(-2.0)]) / (1.0 + np.exp(-2.0))
        )

    def test_aggregate(self) -> None:
        spec = tests.common.drude()
        times = make_time_grid(0.1, 20)
        absorption = oracle.aggregate_correlation_samples(
            [1.0, 2.0], spec, CorrelationKind.ABSORPTION, 1.0, times
        )
        self.assertAlmostEqual(2.0, absorption[0])

        emission = oracle.aggregate_correlation_samples(
            [1.0, 2.0], spec, CorrelationKind.EMISSION, 1.0, times
        )
        self.assertAlmostEqual(1.0, emission[0])

    def test_block_samplers(self) -> None:
        spec = tests.common.drude()
        model = tests.common.chromophoric(spec, site_energies=[1.0, 2.0])
        times = make_time_grid(0.1, 20)
        samplers = oracle.analytic_block_samplers(model, times)

        initial = np.zeros((3, 3), dtype=np.complex128)
        initial[1, 2] = 1.0
        trajectory = samplers.product(initial)
        np.testing.assert_allclose(
            trajectory.values[:, 1, 2],
            oracle.monomer_correlation_samples(
                2.0, spec, CorrelationKind.ABSORPTION, times
            ),
        )
        np.testing.assert_array_equal(trajectory.values[:, 0, 2], 0.0)

        right = np.zeros((3, 3), dtype=np.complex128)
        right[2, 0] = 1.0
        emission = samplers.emission(right)
        populations = oracle.excited_populations([1.0, 2.0], [spec, spec], 1.0)
        self.assertAlmostEqual(populations[0], emission.values[0, 0, 2])
        np.testing.assert_array_equal(emission.values[:, 1, 2], 0.0)


if __name__ == "__main__":
    unittest.main()
