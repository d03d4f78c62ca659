"""Run the configured computation and write its artifacts."""
import argparse
import json
import logging
import os
import pathlib
import sys
from typing import Any, Callable, List, MutableMapping, Optional, Tuple

import icontract
import numpy as np

import kernelforge
from kernelforge import heom, oracle, spectra, ttm
from kernelforge.common import (
    ConfigError,
    ConvergenceError,
    DecayGateError,
    FitError,
    KernelforgeError,
    NumericalInstabilityError,
    OracleError,
    QuadratureError,
    ThermometryError,
    make_time_grid,
    steps_in,
)
from kernelforge.config import (
    NumericsConfig,
    RunConfig,
    Task,
    build_run_model,
    build_run_preparation,
    load_run_config,
    run_config_to_jsonable,
)
from kernelforge.models import (
    HamiltonianModel,
    PreparativeMap,
    model_to_jsonable,
    thermal_system_state,
)
from kernelforge.operators import (
    CorrelationKind,
    Trajectory,
    pointwise_trace_distance,
    write_trajectory_csv,
)

LOGGER = logging.getLogger(__name__)

#: Exit code of a successful run
EXIT_OK = 0

#: Exit code of an invalid configuration
EXIT_CONFIG = 2

#: Exit code of a failed decay gate
EXIT_GATE = 3

#: Exit code of a numerical failure
EXIT_NUMERICAL = 4

#: Environment variable with the number of sampling threads
THREADS_VARIABLE = "KF_THREADS"

Writer = Callable[[pathlib.Path], None]


class Outcome:
    """Collect what a command produced before anything is written."""

    #: Decay gate of the transfer tensors, if any were learned
    report: Optional[ttm.DecayReport]

    #: File names with the functions writing them
    writers: List[Tuple[str, Writer]]

    #: Residuals and fitted values recorded in the manifest
    results: MutableMapping[str, Any]

    def __init__(self) -> None:
        """Initialize as empty."""
        self.report = None
        self.writers = []
        self.results = dict()

    def add(self, name: str, writer: Writer) -> None:
        """Register the ``writer`` of the file ``name``."""
        self.writers.append((name, writer))


# region Tasks


def _correlated_hierarchy_state(
    propagator: heom.HierarchyPropagator,
    model: HamiltonianModel,
    preparation: PreparativeMap,
    config: RunConfig,
) -> heom.HierarchyState:
    """Relax the global thermal state and apply the ``preparation`` to it."""
    seed = propagator.init_product_state(
        thermal_system_state(model, model.common_beta()).entries
    )
    relaxed = propagator.relax_to_stationary(
        seed,
        tol=config.numerics.relaxation_tol,
        t_max=config.numerics.relaxation_t_max,
    )
    return heom.apply_preparation(relaxed, preparation)


def _extension_or_report(
    tensors: ttm.TransferTensors,
    sample: Trajectory,
    config: RunConfig,
    outcome: Outcome,
    verify_only: bool,
) -> Optional[Trajectory]:
    """
    Evaluate the gate on ``sample`` and extend it unless only verifying.

    :raise: :py:class:`DecayGateError` if the gate fails and we do not verify
    """
    numerics = config.numerics
    if numerics.sample_length is not None:
        sample = sample.truncated(min(numerics.sample_length, len(sample)))

    report = ttm.decay_report(
        tensors, ttm.inhomogeneity(tensors, sample), numerics.thresholds
    )
    outcome.report = report
    outcome.add("ttm_norms.csv", lambda path: ttm.write_norms_csv(report, path))

    if verify_only:
        return None

    ttm.check_gate(report)
    n_total = steps_in(numerics.t_total, numerics.dt) + 1
    return ttm.propagate_with_tensors(tensors, sample, n_total)


def _run_trajectory(
    config: RunConfig,
    model: HamiltonianModel,
    max_workers: Optional[int],
    verify_only: bool,
) -> Outcome:
    """Run the trajectory and the transfer-tensor tasks on the hierarchy."""
    assert config.preparation is not None
    if config.task is Task.TRAJECTORY and verify_only:
        raise ConfigError(
            "The trajectory task learns no tensors, there is nothing to verify",
            path="task",
        )

    numerics = config.numerics
    preparation = build_run_preparation(config.preparation, model)
    propagator = heom.propagator_for(
        model, numerics.depth, numerics.scaled, numerics.substeps
    )
    prepared = _correlated_hierarchy_state(propagator, model, preparation, config)
    outcome = Outcome()

    if config.task is Task.TRAJECTORY:
        grid = make_time_grid(numerics.dt, steps_in(numerics.t_total, numerics.dt))
        trajectory, _ = propagator.propagate(prepared, grid)
        outcome.add(
            "trajectory.csv", lambda path: write_trajectory_csv(trajectory, path)
        )
        return outcome

    times = make_time_grid(numerics.dt, steps_in(numerics.tau_sample, numerics.dt))
    maps = ttm.learn_maps(
        propagator.product_sampler(times),
        ttm.hermitian_basis(model.dim),
        times,
        max_workers=max_workers,
    )
    tensors = ttm.tensors_from_maps(maps)
    outcome.results["gram_condition"] = maps.condition

    sample, _ = propagator.propagate(prepared, times)
    extended = _extension_or_report(tensors, sample, config, outcome, verify_only)
    if extended is not None:
        outcome.add("trajectory.csv", lambda path: write_trajectory_csv(extended, path))
    return outcome


def _run_oracle_check(
    config: RunConfig,
    model: HamiltonianModel,
    max_workers: Optional[int],
    verify_only: bool,
) -> Outcome:
    """Learn the tensors from the exact oracle and compare the extension to it."""
    assert config.preparation is not None and config.oracle is not None
    numerics = config.numerics
    oracle_config = config.oracle
    preparation = build_run_preparation(config.preparation, model)

    baths = [
        oracle.discretize_bath(
            coupling.bath,
            n_modes=oracle_config.n_modes,
            omega_max=oracle_config.omega_max,
            fock_cutoff=oracle_config.fock_cutoff,
        )
        for coupling in model.couplings
    ]
    exact = oracle.ExactOracle(model=model, baths=baths, dim_cap=oracle_config.dim_cap)

    times = make_time_grid(numerics.dt, steps_in(numerics.tau_sample, numerics.dt))
    maps = ttm.learn_maps(
        exact.product_sampler(times),
        ttm.hermitian_basis(model.dim),
        times,
        max_workers=max_workers,
    )
    tensors = ttm.tensors_from_maps(maps)

    outcome = Outcome()
    outcome.results["gram_condition"] = maps.condition
    outcome.results["total_dim"] = exact.total_dim

    n_total = steps_in(numerics.t_total, numerics.dt) + 1
    reference = exact.evolve(
        exact.prepared_state(preparation), make_time_grid(numerics.dt, n_total - 1)
    )
    sample = reference.truncated(len(times))

    extended = _extension_or_report(tensors, sample, config, outcome, verify_only)
    if extended is not None:
        distance = pointwise_trace_distance(extended, reference)
        outcome.results["max_trace_distance"] = float(np.max(distance))
        LOGGER.info(
            "The extension deviates from the oracle by at most %.3e",
            outcome.results["max_trace_distance"],
        )
        outcome.add("trajectory.csv", lambda path: write_trajectory_csv(extended, path))

    return outcome


def _spectrum_of(
    model: HamiltonianModel,
    result: spectra.ReducedOperatorResult,
    numerics: NumericsConfig,
) -> spectra.Spectrum:
    """Transform the correlation function of ``result`` as ``numerics`` say."""
    if numerics.transform is spectra.Transform.TENSORS:
        return spectra.tensor_spectrum(
            model,
            result.learned,
            n_points=numerics.pad_factor * len(result.correlation),
            window=numerics.window,
        )

    return spectra.spectrum(
        result.correlation, window=numerics.window, pad_factor=numerics.pad_factor
    )


def _run_spectra(
    config: RunConfig,
    model: HamiltonianModel,
    max_workers: Optional[int],
    verify_only: bool,
) -> Outcome:
    """Compute the absorption and emission spectra, and the temperature."""
    numerics = config.numerics
    times = make_time_grid(numerics.dt, steps_in(numerics.tau_sample, numerics.dt))
    samplers = spectra.hierarchy_samplers(
        model,
        times,
        depth=numerics.depth,
        substeps=numerics.substeps,
        scaled=numerics.scaled,
        relaxation_tol=numerics.relaxation_tol,
        relaxation_t_max=numerics.relaxation_t_max,
    )
    outcome = Outcome()

    if verify_only:
        learned = spectra.learn_block(
            model=model,
            kind=CorrelationKind.EMISSION,
            samplers=samplers,
            dt=numerics.dt,
            tau_sample=numerics.tau_sample,
            thresholds=numerics.thresholds,
            sample_length=numerics.sample_length,
            max_workers=max_workers,
        )
        report = learned.report
        outcome.report = report
        outcome.add("ttm_norms.csv", lambda path: ttm.write_norms_csv(report, path))
        return outcome

    absorption = spectra.reduced_operator_trajectory(
        model=model,
        kind=CorrelationKind.ABSORPTION,
        samplers=samplers,
        dt=numerics.dt,
        tau_sample=numerics.tau_sample,
        t_total=numerics.t_total,
        thresholds=numerics.thresholds,
        max_workers=max_workers,
    )
    emission = spectra.reduced_operator_trajectory(
        model=model,
        kind=CorrelationKind.EMISSION,
        samplers=samplers,
        dt=numerics.dt,
        tau_sample=numerics.tau_sample,
        t_total=numerics.t_total,
        thresholds=numerics.thresholds,
        sample_length=numerics.sample_length,
        max_workers=max_workers,
        tensors=absorption.tensors,
    )
    outcome.report = emission.report
    emission_report = emission.report
    outcome.add(
        "ttm_norms.csv", lambda path: ttm.write_norms_csv(emission_report, path)
    )

    absorption_spectrum = _spectrum_of(model, absorption, numerics)
    emission_spectrum = _spectrum_of(model, emission, numerics)
    outcome.add(
        "spectrum_abs.csv",
        lambda path: spectra.write_spectrum_csv(absorption_spectrum, path),
    )
    outcome.add(
        "spectrum_emi.csv",
        lambda path: spectra.write_spectrum_csv(emission_spectrum, path),
    )
    outcome.results["absorption_peaks"] = [
        peak.omega for peak in spectra.find_peaks(absorption_spectrum)
    ]
    outcome.results["emission_peaks"] = [
        peak.omega for peak in spectra.find_peaks(emission_spectrum)
    ]

    if config.task is Task.THERMOMETRY:
        result = spectra.estimate_beta(
            absorption_spectrum, emission_spectrum, floor=numerics.floor
        )
        report_jsonable = spectra.thermometry_to_jsonable(
            result,
            window=numerics.window,
            pad_factor=numerics.pad_factor,
            floor=numerics.floor,
        )
        report_jsonable["beta_true"] = model.common_beta()
        outcome.add(
            "thermometry.json",
            lambda path: spectra.write_thermometry_json(report_jsonable, path),
        )
        outcome.results["beta"] = result.beta
        outcome.results["beta_stderr"] = result.stderr
        outcome.results["kms_residual"] = spectra.kms_residual(
            absorption.trajectory,
            emission.trajectory,
            beta=result.beta,
            log_z_ratio=result.offset,
            window=numerics.window,
            pad_factor=numerics.pad_factor,
        )

    return outcome


def _execute(
    config: RunConfig, max_workers: Optional[int], verify_only: bool
) -> Tuple[HamiltonianModel, Outcome]:
    """Build the model and run the task of ``config``."""
    model = build_run_model(config.model, config.numerics.n_exp_terms)

    if config.task in (Task.TRAJECTORY, Task.TTM):
        return model, _run_trajectory(config, model, max_workers, verify_only)

    if config.task is Task.ORACLE_CHECK:
        return model, _run_oracle_check(config, model, max_workers, verify_only)

    if config.task in (Task.SPECTRUM, Task.THERMOMETRY):
        return model, _run_spectra(config, model, max_workers, verify_only)

    raise AssertionError(f"Unhandled task: {config.task}")


# endregion

# region Reporting


def _gate_to_jsonable(report: ttm.DecayReport) -> MutableMapping[str, Any]:
    return {
        "passed": report.passed,
        "failed": [threshold.value for threshold in report.failed],
        "tensor_ratio": report.tensor_ratio,
        "inhom_ratio": report.inhom_ratio,
        "tensor_passed": report.tensor_passed,
        "inhom_passed": report.inhom_passed,
        "memory": len(report.tensor_norms),
    }


def _manifest(
    command: str,
    config: RunConfig,
    model: HamiltonianModel,
    outcome: Outcome,
    max_workers: Optional[int],
) -> MutableMapping[str, Any]:
    """Record every parameter, the gate and the results of the run."""
    return {
        "kernelforge_version": kernelforge.__version__,
        "command": command,
        "config": run_config_to_jsonable(config),
        "model": model_to_jsonable(model),
        "threads": max_workers,
        "gate": None if outcome.report is None else _gate_to_jsonable(outcome.report),
        "results": outcome.results,
        "outputs": sorted([name for name, _ in outcome.writers] + ["manifest.json"]),
    }


def _write_outputs(
    output_dir: pathlib.Path,
    outcome: Outcome,
    manifest: MutableMapping[str, Any],
) -> None:
    """Write all the collected artifacts and the manifest."""
    output_dir.mkdir(parents=True, exist_ok=True)
    for name, writer in outcome.writers:
        writer(output_dir / name)

    (output_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def _error_kind(error: KernelforgeError) -> Tuple[str, int]:
    """Map a domain error to its machine-readable kind and the exit code."""
    if isinstance(error, ConfigError):
        return "config", EXIT_CONFIG

    if isinstance(error, DecayGateError):
        return "decay_gate", EXIT_GATE

    for error_type, kind in (
        (NumericalInstabilityError, "numerical_instability"),
        (ConvergenceError, "convergence"),
        (FitError, "fit"),
        (QuadratureError, "quadrature"),
        (OracleError, "oracle"),
        (ThermometryError, "thermometry"),
    ):
        if isinstance(error, error_type):
            return kind, EXIT_NUMERICAL

    return "numerical", EXIT_NUMERICAL


def _report_error(error: KernelforgeError) -> int:
    kind, code = _error_kind(error)
    jsonable = {"error": kind, "message": str(error)}  # type: MutableMapping[str, Any]
    if isinstance(error, DecayGateError):
        jsonable["failed"] = [threshold.value for threshold in error.failed]
    print(json.dumps(jsonable), file=sys.stderr)
    return code


def _threads_from_environment() -> Tuple[Optional[int], Optional[ConfigError]]:
    """Read the number of sampling threads; ``None`` means all the cores."""
    text = os.environ.get(THREADS_VARIABLE, None)
    if text is None or text.strip() == "":
        return os.cpu_count(), None

    try:
        value = int(text)
    except ValueError:
        value = 0

    if value < 1:
        return None, ConfigError(
            f"Expected a positive integer, got {text!r}", path=THREADS_VARIABLE
        )

    return value, None


# endregion


def _overrides(args: argparse.Namespace, command: str) -> MutableMapping[str, Any]:
    overrides = dict()  # type: MutableMapping[str, Any]
    if command == "oracle":
        overrides["task"] = Task.ORACLE_CHECK.value
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    for key in ("dt", "tau_sample", "t_total", "depth"):
        value = getattr(args, key)
        if value is not None:
            overrides[f"numerics.{key}"] = value
    return overrides


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelforge", description=__doc__)
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {kernelforge.__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command, help_text in (
        ("run", "run the configured task and write all the artifacts"),
        ("verify", "sample and report the decay gate without extending"),
        ("oracle", "check the transfer tensors against the exact oracle"),
    ):
        subparser = subparsers.add_parser(command, help=help_text)
        subparser.add_argument("config", help="path to the JSON run configuration")
        subparser.add_argument(
            "--output_dir", help="directory of the artifacts; overrides the config"
        )
        subparser.add_argument("--dt", type=float, help="overrides numerics.dt")
        subparser.add_argument(
            "--tau_sample", type=float, help="overrides numerics.tau_sample"
        )
        subparser.add_argument(
            "--t_total", type=float, help="overrides numerics.t_total"
        )
        subparser.add_argument("--depth", type=int, help="overrides numerics.depth")
        subparser.add_argument(
            "--verbose", help="log the progress to stderr", action="store_true"
        )

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Execute the main routine."""
    parser = _make_parser()
    args = parser.parse_args(argv)
    command = str(args.command)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )

    config, error = load_run_config(
        pathlib.Path(args.config), overrides=_overrides(args, command)
    )
    if error is not None:
        return _report_error(error)
    assert config is not None

    threads, error = _threads_from_environment()
    if error is not None:
        return _report_error(error)
    max_workers = 1 if config.deterministic else threads

    verify_only = command == "verify"
    try:
        model, outcome = _execute(config, max_workers, verify_only)
    except KernelforgeError as exception:
        return _report_error(exception)
    except icontract.ViolationError as exception:
        return _report_error(
            ConfigError(f"The run violates a precondition of the model: {exception}")
        )
    except (np.linalg.LinAlgError, FloatingPointError) as exception:
        return _report_error(
            KernelforgeError(f"The linear algebra failed: {exception}")
        )

    manifest = _manifest(command, config, model, outcome, max_workers)
    try:
        _write_outputs(config.output_dir, outcome, manifest)
    except OSError as exception:
        return _report_error(
            ConfigError(f"Failed to write the outputs: {exception}", path="output_dir")
        )

    if outcome.report is not None and not outcome.report.passed:
        print(
            json.dumps(
                {
                    "error": "decay_gate",
                    "message": "The decay gate failed; see ttm_norms.csv",
                    "failed": [threshold.value for threshold in outcome.report.failed],
                }
            ),
            file=sys.stderr,
        )
        return EXIT_GATE

    return EXIT_OK


def entry_point() -> int:
    """Provide an entry point for a console script."""
    return main()


if __name__ == "__main__":
    sys.exit(main())
