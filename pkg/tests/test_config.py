import copy
import pathlib
import tempfile
import unittest
from typing import Any, MutableMapping

from kernelforge import bath, config, heom, spectra
from kernelforge.common import ConfigError
from kernelforge.models import ModelKind, PreparationRecipe, model_to_jsonable
from kernelforge.ttm import DecayThresholds

import tests.common

# pylint: disable=missing-docstring


def _spin_boson_jsonable() -> MutableMapping[str, Any]:
    return {
        "model": {
            "kind": "spin_boson",
            "eps": 1.0,
            "delta": 1.0,
            "bath": {
                "family": "drude_lorentz_ht",
                "lambda": 0.1,
                "omega_c": 1.0,
                "beta": 1.0,
            },
        },
        "task": "ttm",
        "preparation": {"kind": "rotation_x", "theta": 0.5},
        "numerics": {"dt": 0.1, "tau_sample": 5.0, "t_total": 20.0},
        "output_dir": "out",
    }


def _dimer_jsonable() -> MutableMapping[str, Any]:
    return {
        "model": {
            "kind": "chromophoric",
            "site_energies": [1.0, 1.2],
            "site_couplings": [[0, 1, 0.05]],
            "bath": {
                "family": "drude_lorentz_ht",
                "lambda": 0.1,
                "omega_c": 1.0,
                "beta": 1.0,
            },
        },
        "task": "thermometry",
        "numerics": {
            "dt": 0.1,
            "tau_sample": 10.0,
            "t_total": 100.0,
            "window": {"kind": "none"},
            "pad_factor": 4,
            "transform": "tensors",
            "thresholds": {"tensor_tail": 0.01},
        },
        "output_dir": "out",
        "deterministic": True,
    }


def _parse_ok(jsonable: Any, overrides: Any = None) -> config.RunConfig:
    run_config, error = config.parse_run_config(jsonable, overrides=overrides)
    assert error is None, str(error)
    assert run_config is not None
    return run_config


def _parse_error(jsonable: Any) -> ConfigError:
    run_config, error = config.parse_run_config(jsonable)
    assert run_config is None
    assert error is not None
    return error


class Test_parse_run_config(unittest.TestCase):
    def test_defaults(self) -> None:
        run_config = _parse_ok(_spin_boson_jsonable())

        self.assertIs(config.Task.TTM, run_config.task)
        self.assertIs(ModelKind.SPIN_BOSON, run_config.model.kind)
        self.assertEqual(pathlib.Path("out"), run_config.output_dir)
        self.assertFalse(run_config.deterministic)

        numerics = run_config.numerics
        self.assertEqual(heom.DEFAULT_DEPTH, numerics.depth)
        self.assertEqual(bath.DEFAULT_N_TERMS, numerics.n_exp_terms)
        assert numerics.window is not None
        self.assertEqual(spectra.DEFAULT_WINDOW_RATE, numerics.window.rate)
        self.assertEqual(DecayThresholds().tensor_tail, numerics.thresholds.tensor_tail)
        self.assertIsNone(numerics.sample_length)
        self.assertIs(spectra.Transform.FFT, numerics.transform)

        assert run_config.preparation is not None
        self.assertIs(PreparationRecipe.ROTATION_X, run_config.preparation.recipe)
        self.assertEqual(0.5, run_config.preparation.theta)

    def test_spectra_settings(self) -> None:
        run_config = _parse_ok(_dimer_jsonable())
        self.assertIsNone(run_config.numerics.window)
        self.assertEqual(4, run_config.numerics.pad_factor)
        self.assertIs(spectra.Transform.TENSORS, run_config.numerics.transform)
        self.assertEqual(0.01, run_config.numerics.thresholds.tensor_tail)
        self.assertEqual(
            DecayThresholds().inhom_tail, run_config.numerics.thresholds.inhom_tail
        )
        self.assertTrue(run_config.deterministic)

        assert run_config.model.parameters is not None
        self.assertEqual([(0, 1, 0.05)], run_config.model.parameters.site_couplings)

    def test_overrides(self) -> None:
        jsonable = _spin_boson_jsonable()
        original = copy.deepcopy(jsonable)
        run_config = _parse_ok(
            jsonable, overrides={"numerics.dt": 0.05, "output_dir": "elsewhere"}
        )
        self.assertEqual(0.05, run_config.numerics.dt)
        self.assertEqual(pathlib.Path("elsewhere"), run_config.output_dir)
        self.assertEqual(original, jsonable)

    def test_explicit_model(self) -> None:
        model = tests.common.spin_boson(tests.common.drude(), eps=1.0, delta=0.3)
        jsonable = _spin_boson_jsonable()
        jsonable["model"] = model_to_jsonable(model)

        run_config = _parse_ok(jsonable)
        self.assertIsNotNone(run_config.model.explicit)
        built = config.build_run_model(run_config.model, n_exp_terms=3)
        self.assertEqual(model.labels, built.labels)

    def test_round_trip_through_manifest_form(self) -> None:
        run_config = _parse_ok(_dimer_jsonable())
        jsonable = config.run_config_to_jsonable(run_config)
        self.assertEqual(jsonable, config.run_config_to_jsonable(_parse_ok(jsonable)))


class Test_errors(unittest.TestCase):
    def _assert_path(self, jsonable: Any, path: str) -> None:
        error = _parse_error(jsonable)
        self.assertEqual(path, error.path, str(error))
        self.assertTrue(str(error).startswith(f"{path}: "))

    def test_not_an_object(self) -> None:
        self._assert_path([], "<root>")

    def test_unexpected_property(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["colour"] = "blue"
        self._assert_path(jsonable, "<root>")

    def test_missing_model(self) -> None:
        jsonable = _spin_boson_jsonable()
        del jsonable["model"]
        self._assert_path(jsonable, "model")

    def test_negative_coupling_strength(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["model"]["bath"]["lambda"] = -0.1
        self._assert_path(jsonable, "model.bath.lambda")

    def test_boolean_is_not_a_number(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["numerics"]["dt"] = True
        self._assert_path(jsonable, "numerics.dt")

    def test_unknown_family(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["model"]["bath"]["family"] = "lorentz"
        self._assert_path(jsonable, "model.bath.family")

    def test_missing_model_parameter(self) -> None:
        jsonable = _spin_boson_jsonable()
        del jsonable["model"]["delta"]
        self._assert_path(jsonable, "model")

    def test_sampling_window_beyond_total(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["numerics"]["tau_sample"] = 30.0
        self._assert_path(jsonable, "numerics")

    def test_sampling_window_below_step(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["numerics"]["tau_sample"] = 0.01
        self._assert_path(jsonable, "numerics")

    def test_unknown_window(self) -> None:
        jsonable = _dimer_jsonable()
        jsonable["numerics"]["window"] = {"kind": "hann"}
        self._assert_path(jsonable, "numerics.window.kind")

    def test_unknown_transform(self) -> None:
        jsonable = _dimer_jsonable()
        jsonable["numerics"]["transform"] = "laplace"
        self._assert_path(jsonable, "numerics.transform")

    def test_tail_above_one(self) -> None:
        jsonable = _dimer_jsonable()
        jsonable["numerics"]["thresholds"] = {"inhom_tail": 2.0}
        self._assert_path(jsonable, "numerics.thresholds")

    def test_rotation_without_angle(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["preparation"] = {"kind": "rotation_x"}
        self._assert_path(jsonable, "preparation.theta")

    def test_task_without_preparation(self) -> None:
        jsonable = _spin_boson_jsonable()
        del jsonable["preparation"]
        self._assert_path(jsonable, "preparation")

    def test_spectrum_of_spin_boson(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["task"] = "spectrum"
        self._assert_path(jsonable, "model.kind")

    def test_oracle_check_without_oracle(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["task"] = "oracle_check"
        self._assert_path(jsonable, "oracle")

    def test_empty_output_dir(self) -> None:
        jsonable = _spin_boson_jsonable()
        jsonable["output_dir"] = ""
        self._assert_path(jsonable, "output_dir")


class Test_load_run_config(unittest.TestCase):
    def test_invalid_json(self) -> None:
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = pathlib.Path(tmp_dir) / "run.json"
            path.write_text("{\n  \"task\": ", encoding="utf-8")
            run_config, error = config.load_run_config(path)

        self.assertIsNone(run_config)
        assert error is not None
        self.assertEqual(str(path), error.path)
        self.assertIn("line 2", str(error))

    def test_missing_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmp_dir:
            run_config, error = config.load_run_config(
                pathlib.Path(tmp_dir) / "missing.json"
            )

        self.assertIsNone(run_config)
        self.assertIsNotNone(error)


class Test_realization(unittest.TestCase):
    def test_parametrized_dimer(self) -> None:
        run_config = _parse_ok(_dimer_jsonable())
        model = config.build_run_model(run_config.model, n_exp_terms=3)
        self.assertEqual(3, model.dim)
        self.assertEqual(2, model.ground)
        self.assertEqual(0.05, model.h_sys[0, 1].real)

    def test_preparation_fits_the_model(self) -> None:
        run_config = _parse_ok(_spin_boson_jsonable())
        model = config.build_run_model(run_config.model, n_exp_terms=3)
        assert run_config.preparation is not None
        preparation = config.build_run_preparation(run_config.preparation, model)
        self.assertEqual(2, preparation.dim)

    def test_rotation_of_dimer(self) -> None:
        run_config = _parse_ok(_dimer_jsonable())
        model = config.build_run_model(run_config.model, n_exp_terms=3)
        with self.assertRaises(ConfigError) as context:
            config.build_run_preparation(
                config.PreparationConfig(PreparationRecipe.ROTATION_X, theta=0.1),
                model,
            )
        self.assertEqual("preparation", context.exception.path)

    def test_projector_of_spin_boson(self) -> None:
        run_config = _parse_ok(_spin_boson_jsonable())
        model = config.build_run_model(run_config.model, n_exp_terms=3)
        with self.assertRaises(ConfigError):
            config.build_run_preparation(
                config.PreparationConfig(PreparationRecipe.EXCITED_PROJECTOR), model
            )


if __name__ == "__main__":
    unittest.main()
