"""Parse and validate the JSON configuration of a run."""
import enum
import json
import math
import pathlib
from typing import (
    Any,
    List,
    Mapping,
    MutableMapping,
    Optional,
    Sequence,
    Tuple,
)

import icontract
from icontract import ensure, invariant

from kernelforge import bath as bath_module
from kernelforge import heom, oracle, spectra
from kernelforge.common import ConfigError
from kernelforge.models import (
    BathFamily,
    HamiltonianModel,
    ModelKind,
    ModelParameters,
    PreparationParameters,
    PreparationRecipe,
    PreparativeMap,
    build_model,
    make_preparation,
    missing_parameters,
    model_from_jsonable,
    model_to_jsonable,
)
from kernelforge.ttm import DecayThresholds


class Task(enum.Enum):
    """List what a run computes."""

    #: Hierarchy propagation of a prepared correlated state
    TRAJECTORY = "trajectory"

    #: Short hierarchy sample continued with transfer tensors
    TTM = "ttm"

    #: Absorption and emission spectra
    SPECTRUM = "spectrum"

    #: Spectra with the temperature fitted from their ratio
    THERMOMETRY = "thermometry"

    #: Transfer tensors learned from and checked against the exact oracle
    ORACLE_CHECK = "oracle_check"


class BathConfig:
    """Specify the bath attached to every coupling of a parametrized model."""

    family: BathFamily
    lam: float
    omega_c: float
    beta: float
    fit_tol: float

    #: End of the fit window of the ohmic kernel; default if ``None``
    t_max: Optional[float]

    def __init__(
        self,
        family: BathFamily,
        lam: float,
        omega_c: float,
        beta: float,
        fit_tol: float = bath_module.DEFAULT_FIT_TOL,
        t_max: Optional[float] = None,
    ) -> None:
        """Initialize with the given values."""
        self.family = family
        self.lam = lam
        self.omega_c = omega_c
        self.beta = beta
        self.fit_tol = fit_tol
        self.t_max = t_max


class ModelConfig:
    """
    Specify the model either by its parameters or explicitly.

    Exactly one of ``parameters`` and ``explicit`` is set.
    """

    kind: ModelKind

    #: Parameters of the model builder, the bath aside
    parameters: Optional[ModelParameters]

    bath: Optional[BathConfig]

    #: Model given in its JSON form, expansions included
    explicit: Optional[HamiltonianModel]

    def __init__(
        self,
        kind: ModelKind,
        parameters: Optional[ModelParameters] = None,
        bath: Optional[BathConfig] = None,
        explicit: Optional[HamiltonianModel] = None,
    ) -> None:
        """Initialize with the given values."""
        self.kind = kind
        self.parameters = parameters
        self.bath = bath
        self.explicit = explicit


class PreparationConfig:
    """Specify the preparative map of the correlated initial state."""

    recipe: PreparationRecipe
    theta: Optional[float]
    target: Optional[List[complex]]

    def __init__(
        self,
        recipe: PreparationRecipe,
        theta: Optional[float] = None,
        target: Optional[Sequence[complex]] = None,
    ) -> None:
        """Initialize with the given values."""
        self.recipe = recipe
        self.theta = theta
        self.target = None if target is None else list(target)


# fmt: off
@invariant(lambda self: self.dt > 0.0)
@invariant(lambda self: 0.0 < self.tau_sample <= self.t_total)
@invariant(lambda self: self.depth >= 1 and self.substeps >= 1)
@invariant(lambda self: self.n_exp_terms >= 1)
@invariant(lambda self: self.pad_factor >= 1)
@invariant(lambda self: self.sample_length is None or self.sample_length >= 1)
# fmt: on
class NumericsConfig(icontract.DBC):
    """Collect the numerical settings of a run."""

    #: Grid spacing in units of 1/ε
    dt: float

    #: Length of the sampling window in units of 1/ε
    tau_sample: float

    #: Length of the whole trajectory in units of 1/ε
    t_total: float

    depth: int
    substeps: int
    scaled: bool

    #: Number of exponentials fitted to an ohmic kernel
    n_exp_terms: int

    #: Exponential window of the spectra; ``None`` for no window
    window: Optional[spectra.ExponentialWindow]

    pad_factor: int

    #: How the correlation functions become spectra
    transform: spectra.Transform

    thresholds: DecayThresholds
    relaxation_tol: float
    relaxation_t_max: float

    #: Relative level of the spectra below which the temperature fit ignores them
    floor: float

    #: Length the correlated sample is cut to; the whole sample if ``None``
    sample_length: Optional[int]

    def __init__(
        self,
        dt: float,
        tau_sample: float,
        t_total: float,
        depth: int = heom.DEFAULT_DEPTH,
        substeps: int = heom.DEFAULT_SUBSTEPS,
        scaled: bool = False,
        n_exp_terms: int = bath_module.DEFAULT_N_TERMS,
        window: Optional[spectra.ExponentialWindow] = spectra.ExponentialWindow(),
        pad_factor: int = 1,
        transform: spectra.Transform = spectra.Transform.FFT,
        thresholds: DecayThresholds = DecayThresholds(),
        relaxation_tol: float = spectra.DEFAULT_RELAXATION_TOL,
        relaxation_t_max: float = spectra.DEFAULT_RELAXATION_T_MAX,
        floor: float = spectra.DEFAULT_FLOOR,
        sample_length: Optional[int] = None,
    ) -> None:
        """Initialize with the given values."""
        self.dt = dt
        self.tau_sample = tau_sample
        self.t_total = t_total
        self.depth = depth
        self.substeps = substeps
        self.scaled = scaled
        self.n_exp_terms = n_exp_terms
        self.window = window
        self.pad_factor = pad_factor
        self.transform = transform
        self.thresholds = thresholds
        self.relaxation_tol = relaxation_tol
        self.relaxation_t_max = relaxation_t_max
        self.floor = floor
        self.sample_length = sample_length


class OracleConfig:
    """Specify the discretized bath of the exact oracle."""

    n_modes: int
    omega_max: float
    fock_cutoff: int
    dim_cap: int

    def __init__(
        self,
        n_modes: int,
        omega_max: float,
        fock_cutoff: int = oracle.DEFAULT_FOCK_CUTOFF,
        dim_cap: int = oracle.DEFAULT_DIM_CAP,
    ) -> None:
        """Initialize with the given values."""
        self.n_modes = n_modes
        self.omega_max = omega_max
        self.fock_cutoff = fock_cutoff
        self.dim_cap = dim_cap


class RunConfig:
    """Represent a complete, validated run configuration."""

    model: ModelConfig
    task: Task
    preparation: Optional[PreparationConfig]
    numerics: NumericsConfig
    oracle: Optional[OracleConfig]
    output_dir: pathlib.Path

    #: Sample sequentially so that the outputs do not depend on the threads
    deterministic: bool

    def __init__(
        self,
        model: ModelConfig,
        task: Task,
        preparation: Optional[PreparationConfig],
        numerics: NumericsConfig,
        oracle: Optional[OracleConfig],
        output_dir: pathlib.Path,
        deterministic: bool = False,
    ) -> None:
        """Initialize with the given values."""
        self.model = model
        self.task = task
        self.preparation = preparation
        self.numerics = numerics
        self.oracle = oracle
        self.output_dir = output_dir
        self.deterministic = deterministic


# region Parsing


def _expect_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ConfigError(
            f"Expected an object, but got {type(value).__name__}", path=path
        )
    return value


def _check_keys(mapping: Mapping[str, Any], allowed: Sequence[str], path: str) -> None:
    unexpected = sorted(set(mapping.keys()).difference(allowed))
    if len(unexpected) > 0:
        raise ConfigError(
            f"Unexpected properties {unexpected}; expected only {sorted(allowed)}",
            path=path,
        )


def _number(
    mapping: Mapping[str, Any],
    key: str,
    path: str,
    default: Optional[float] = None,
    positive: bool = False,
) -> float:
    value = mapping.get(key, default)
    if value is None:
        raise ConfigError("The property is required", path=f"{path}.{key}")

    # bool is a subclass of int
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"Expected a number, got {value!r}", path=f"{path}.{key}")

    result = float(value)
    if not math.isfinite(result):
        raise ConfigError(
            f"Expected a finite number, got {value!r}", path=f"{path}.{key}"
        )

    if positive and result <= 0.0:
        raise ConfigError(
            f"Expected a positive number, got {value!r}", path=f"{path}.{key}"
        )

    return result


def _optional_number(
    mapping: Mapping[str, Any], key: str, path: str, positive: bool = False
) -> Optional[float]:
    if mapping.get(key, None) is None:
        return None

    return _number(mapping, key, path, positive=positive)


def _integer(
    mapping: Mapping[str, Any],
    key: str,
    path: str,
    default: Optional[int] = None,
    minimum: int = 1,
) -> int:
    value = mapping.get(key, default)
    if value is None:
        raise ConfigError("The property is required", path=f"{path}.{key}")

    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(
            f"Expected an integer, got {value!r}", path=f"{path}.{key}"
        )

    if value < minimum:
        raise ConfigError(
            f"Expected an integer of at least {minimum}, got {value!r}",
            path=f"{path}.{key}",
        )

    return value


def _boolean(
    mapping: Mapping[str, Any], key: str, path: str, default: bool = False
) -> bool:
    value = mapping.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"Expected a boolean, got {value!r}", path=f"{path}.{key}")
    return value


def _enum_value(
    mapping: Mapping[str, Any], key: str, path: str, enum_type: Any
) -> Any:
    value = mapping.get(key, None)
    literals = [literal.value for literal in enum_type]
    if value not in literals:
        raise ConfigError(
            f"Expected one of {literals}, got {value!r}", path=f"{path}.{key}"
        )
    return enum_type(value)


def _parse_bath(jsonable: Any, path: str) -> BathConfig:
    mapping = _expect_mapping(jsonable, path)
    _check_keys(
        mapping, ["family", "lambda", "omega_c", "beta", "fit_tol", "t_max"], path
    )
    return BathConfig(
        family=_enum_value(mapping, "family", path, BathFamily),
        lam=_number(mapping, "lambda", path, positive=True),
        omega_c=_number(mapping, "omega_c", path, positive=True),
        beta=_number(mapping, "beta", path, positive=True),
        fit_tol=_number(
            mapping, "fit_tol", path, default=bath_module.DEFAULT_FIT_TOL, positive=True
        ),
        t_max=_optional_number(mapping, "t_max", path, positive=True),
    )


def _parse_site_couplings(
    value: Any, path: str
) -> List[Tuple[int, int, float]]:
    if value is None:
        return []

    if not isinstance(value, list):
        raise ConfigError("Expected a list of [i, j, v] triples", path=path)

    result = []  # type: List[Tuple[int, int, float]]
    for position, item in enumerate(value):
        if (
            not isinstance(item, list)
            or len(item) != 3
            or not all(isinstance(part, int) for part in item[:2])
            or not isinstance(item[2], (int, float))
        ):
            raise ConfigError(
                f"Expected an [i, j, v] triple, got {item!r}",
                path=f"{path}[{position}]",
            )
        result.append((item[0], item[1], float(item[2])))
    return result


def _parse_model(jsonable: Any, path: str) -> ModelConfig:
    mapping = _expect_mapping(jsonable, path)

    if "h_sys" in mapping:
        try:
            explicit = model_from_jsonable(mapping)
        except (KeyError, TypeError, ValueError, icontract.ViolationError) as exception:
            raise ConfigError(f"Invalid explicit model: {exception}", path=path)
        return ModelConfig(kind=explicit.kind, explicit=explicit)

    _check_keys(
        mapping,
        ["kind", "eps", "delta", "site_energies", "site_couplings", "bath"],
        path,
    )
    kind = _enum_value(mapping, "kind", path, ModelKind)

    site_energies = mapping.get("site_energies", None)
    if site_energies is not None and (
        not isinstance(site_energies, list)
        or not all(
            isinstance(energy, (int, float)) and not isinstance(energy, bool)
            for energy in site_energies
        )
    ):
        raise ConfigError(
            "Expected a list of numbers", path=f"{path}.site_energies"
        )

    parameters = ModelParameters(
        eps=_optional_number(mapping, "eps", path),
        delta=_optional_number(mapping, "delta", path),
        site_energies=site_energies,
        site_couplings=_parse_site_couplings(
            mapping.get("site_couplings", None), f"{path}.site_couplings"
        ),
    )

    if "bath" not in mapping:
        raise ConfigError("The property is required", path=f"{path}.bath")
    bath = _parse_bath(mapping["bath"], f"{path}.bath")

    # The bath is checked on its own; only the model parameters are left.
    problems = [
        problem for problem in missing_parameters(kind, parameters) if problem != "bath"
    ]
    if len(problems) > 0:
        raise ConfigError(
            f"Missing or invalid parameters of the {kind.value} model: {problems}",
            path=path,
        )

    return ModelConfig(kind=kind, parameters=parameters, bath=bath)


def _parse_preparation(jsonable: Any, path: str) -> PreparationConfig:
    mapping = _expect_mapping(jsonable, path)
    _check_keys(mapping, ["kind", "theta", "target"], path)
    recipe = _enum_value(mapping, "kind", path, PreparationRecipe)

    target = None  # type: Optional[List[complex]]
    if mapping.get("target", None) is not None:
        raw = mapping["target"]
        if not isinstance(raw, list) or not all(
            isinstance(item, list)
            and len(item) == 2
            and all(isinstance(part, (int, float)) for part in item)
            for item in raw
        ):
            raise ConfigError(
                "Expected a list of [re, im] pairs", path=f"{path}.target"
            )
        target = [complex(re, im) for re, im in raw]

    theta = _optional_number(mapping, "theta", path)
    if recipe is PreparationRecipe.ROTATION_X and theta is None:
        raise ConfigError("The rotation needs theta", path=f"{path}.theta")

    return PreparationConfig(recipe=recipe, theta=theta, target=target)


def _parse_window(jsonable: Any, path: str) -> Optional[spectra.ExponentialWindow]:
    if jsonable is None:
        return spectra.ExponentialWindow()

    mapping = _expect_mapping(jsonable, path)
    _check_keys(mapping, ["kind", "rate"], path)
    kind = mapping.get("kind", None)
    if kind == "none":
        return None

    if kind == "exponential":
        return spectra.ExponentialWindow(
            rate=_number(
                mapping,
                "rate",
                path,
                default=spectra.DEFAULT_WINDOW_RATE,
                positive=True,
            )
        )

    raise ConfigError(
        f"Expected 'none' or 'exponential', got {kind!r}", path=f"{path}.kind"
    )


def _parse_thresholds(jsonable: Any, path: str) -> DecayThresholds:
    if jsonable is None:
        return DecayThresholds()

    mapping = _expect_mapping(jsonable, path)
    _check_keys(mapping, ["tensor_tail", "inhom_tail", "floor"], path)
    default = DecayThresholds()
    tensor_tail = _number(
        mapping, "tensor_tail", path, default=default.tensor_tail, positive=True
    )
    inhom_tail = _number(
        mapping, "inhom_tail", path, default=default.inhom_tail, positive=True
    )
    floor = _number(mapping, "floor", path, default=default.floor)
    if tensor_tail > 1.0 or inhom_tail > 1.0 or floor < 0.0:
        raise ConfigError(
            "Expected the tails in (0, 1] and a non-negative floor", path=path
        )

    return DecayThresholds(tensor_tail=tensor_tail, inhom_tail=inhom_tail, floor=floor)


def _parse_transform(mapping: Mapping[str, Any], path: str) -> spectra.Transform:
    if mapping.get("transform", None) is None:
        return spectra.Transform.FFT

    return _enum_value(mapping, "transform", path, spectra.Transform)


_NUMERICS_KEYS = [
    "dt",
    "tau_sample",
    "t_total",
    "depth",
    "substeps",
    "scaled",
    "n_exp_terms",
    "window",
    "pad_factor",
    "transform",
    "thresholds",
    "relaxation_tol",
    "relaxation_t_max",
    "floor",
    "sample_length",
]


def _parse_numerics(jsonable: Any, path: str) -> NumericsConfig:
    mapping = _expect_mapping(jsonable, path)
    _check_keys(mapping, _NUMERICS_KEYS, path)

    dt = _number(mapping, "dt", path, positive=True)
    tau_sample = _number(mapping, "tau_sample", path, positive=True)
    t_total = _number(mapping, "t_total", path, positive=True)
    if tau_sample > t_total:
        raise ConfigError(
            f"Expected tau_sample <= t_total, got {tau_sample} > {t_total}", path=path
        )
    if round(tau_sample / dt) < 1:
        raise ConfigError(
            f"The sampling window {tau_sample} is shorter than the step {dt}", path=path
        )

    floor = _number(
        mapping, "floor", path, default=spectra.DEFAULT_FLOOR, positive=True
    )
    if floor >= 1.0:
        raise ConfigError(
            f"Expected a floor below 1, got {floor}", path=f"{path}.floor"
        )

    sample_length = None  # type: Optional[int]
    if mapping.get("sample_length", None) is not None:
        sample_length = _integer(mapping, "sample_length", path)

    return NumericsConfig(
        dt=dt,
        tau_sample=tau_sample,
        t_total=t_total,
        depth=_integer(mapping, "depth", path, default=heom.DEFAULT_DEPTH),
        substeps=_integer(mapping, "substeps", path, default=heom.DEFAULT_SUBSTEPS),
        scaled=_boolean(mapping, "scaled", path),
        n_exp_terms=_integer(
            mapping, "n_exp_terms", path, default=bath_module.DEFAULT_N_TERMS
        ),
        window=_parse_window(mapping.get("window", None), f"{path}.window"),
        pad_factor=_integer(mapping, "pad_factor", path, default=1),
        transform=_parse_transform(mapping, path),
        thresholds=_parse_thresholds(
            mapping.get("thresholds", None), f"{path}.thresholds"
        ),
        relaxation_tol=_number(
            mapping,
            "relaxation_tol",
            path,
            default=spectra.DEFAULT_RELAXATION_TOL,
            positive=True,
        ),
        relaxation_t_max=_number(
            mapping,
            "relaxation_t_max",
            path,
            default=spectra.DEFAULT_RELAXATION_T_MAX,
            positive=True,
        ),
        floor=floor,
        sample_length=sample_length,
    )


def _parse_oracle(jsonable: Any, path: str) -> OracleConfig:
    mapping = _expect_mapping(jsonable, path)
    _check_keys(mapping, ["n_modes", "omega_max", "fock_cutoff", "dim_cap"], path)
    return OracleConfig(
        n_modes=_integer(mapping, "n_modes", path),
        omega_max=_number(mapping, "omega_max", path, positive=True),
        fock_cutoff=_integer(
            mapping,
            "fock_cutoff",
            path,
            default=oracle.DEFAULT_FOCK_CUTOFF,
            minimum=2,
        ),
        dim_cap=_integer(mapping, "dim_cap", path, default=oracle.DEFAULT_DIM_CAP),
    )


_TOP_LEVEL_KEYS = [
    "model",
    "task",
    "preparation",
    "numerics",
    "oracle",
    "output_dir",
    "deterministic",
]


def _check_task_requirements(
    task: Task,
    model: ModelConfig,
    preparation: Optional[PreparationConfig],
    oracle_config: Optional[OracleConfig],
) -> None:
    if task in (Task.TRAJECTORY, Task.TTM, Task.ORACLE_CHECK) and preparation is None:
        raise ConfigError(
            f"The task {task.value} needs a preparation", path="preparation"
        )

    if task in (Task.SPECTRUM, Task.THERMOMETRY) and model.kind not in (
        ModelKind.CHROMOPHORIC,
        ModelKind.EIT_LAMBDA,
    ):
        raise ConfigError(
            f"The task {task.value} needs a chromophoric or an EIT model, "
            f"got {model.kind.value}",
            path="model.kind",
        )

    if task is Task.ORACLE_CHECK:
        if oracle_config is None:
            raise ConfigError("The oracle check needs an oracle block", path="oracle")
        if model.explicit is not None:
            raise ConfigError(
                "The oracle check needs a parametrized model to discretize its bath",
                path="model",
            )


def _set_dotted(jsonable: MutableMapping[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    cursor = jsonable
    for part in parts[:-1]:
        nested = cursor.get(part, None)
        if not isinstance(nested, MutableMapping):
            nested = dict()
            cursor[part] = nested
        cursor = nested
    cursor[parts[-1]] = value


@ensure(lambda result: (result[0] is not None) ^ (result[1] is not None))
def parse_run_config(
    jsonable: Any, overrides: Optional[Mapping[str, Any]] = None
) -> Tuple[Optional[RunConfig], Optional[ConfigError]]:
    """
    Parse and validate the JSON-able run configuration.

    The ``overrides`` are keyed by dotted paths, such as ``numerics.dt``, and
    replace the values of ``jsonable`` before the validation.
    """
    try:
        mapping = dict(_expect_mapping(jsonable, "<root>"))
        if overrides is not None:
            mapping = json.loads(json.dumps(mapping))
            for key, value in overrides.items():
                _set_dotted(mapping, key, value)

        _check_keys(mapping, _TOP_LEVEL_KEYS, "<root>")

        for required in ("model", "task", "numerics", "output_dir"):
            if required not in mapping:
                raise ConfigError("The property is required", path=required)

        model = _parse_model(mapping["model"], "model")
        task = _enum_value(mapping, "task", "<root>", Task)

        preparation = None  # type: Optional[PreparationConfig]
        if mapping.get("preparation", None) is not None:
            preparation = _parse_preparation(mapping["preparation"], "preparation")

        numerics = _parse_numerics(mapping["numerics"], "numerics")

        oracle_config = None  # type: Optional[OracleConfig]
        if mapping.get("oracle", None) is not None:
            oracle_config = _parse_oracle(mapping["oracle"], "oracle")

        output_dir = mapping["output_dir"]
        if not isinstance(output_dir, str) or output_dir == "":
            raise ConfigError(
                f"Expected a non-empty path, got {output_dir!r}", path="output_dir"
            )

        _check_task_requirements(task, model, preparation, oracle_config)

        return (
            RunConfig(
                model=model,
                task=task,
                preparation=preparation,
                numerics=numerics,
                oracle=oracle_config,
                output_dir=pathlib.Path(output_dir),
                deterministic=_boolean(mapping, "deterministic", "<root>"),
            ),
            None,
        )
    except ConfigError as error:
        return None, error


@ensure(lambda result: (result[0] is not None) ^ (result[1] is not None))
def load_run_config(
    path: pathlib.Path, overrides: Optional[Mapping[str, Any]] = None
) -> Tuple[Optional[RunConfig], Optional[ConfigError]]:
    """Read the run configuration from the JSON file at ``path``."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exception:
        return None, ConfigError(f"Failed to read the configuration: {exception}")

    try:
        jsonable = json.loads(text)
    except json.JSONDecodeError as exception:
        return None, ConfigError(
            f"Invalid JSON at line {exception.lineno}, column {exception.colno}: "
            f"{exception.msg}",
            path=str(path),
        )

    return parse_run_config(jsonable, overrides=overrides)


# endregion

# region Realization


def build_run_model(config: ModelConfig, n_exp_terms: int) -> HamiltonianModel:
    """
    Build the model the configuration specifies.

    The bath of a parametrized model is expanded (and fitted, for the ohmic
    family) with ``n_exp_terms`` exponentials.

    :raise: :py:class:`~kernelforge.common.FitError` if the ohmic fit misses
        its tolerance
    """
    if config.explicit is not None:
        return config.explicit

    assert config.parameters is not None and config.bath is not None
    spec = bath_module.make_bath_spec(
        family=config.bath.family,
        lam=config.bath.lam,
        omega_c=config.bath.omega_c,
        beta=config.bath.beta,
        n_terms=n_exp_terms,
        tol=config.bath.fit_tol,
        t_max=config.bath.t_max,
    )
    parameters = config.parameters
    return build_model(
        config.kind,
        ModelParameters(
            bath=spec,
            eps=parameters.eps,
            delta=parameters.delta,
            site_energies=parameters.site_energies,
            site_couplings=parameters.site_couplings,
        ),
    )


def build_run_preparation(
    config: PreparationConfig, model: HamiltonianModel
) -> PreparativeMap:
    """
    Build the preparative map of the configuration for ``model``.

    :raise: :py:class:`~kernelforge.common.ConfigError` if the recipe does not
        fit the model
    """
    try:
        preparation = make_preparation(
            config.recipe,
            PreparationParameters(
                theta=config.theta, target=config.target, model=model, dim=model.dim
            ),
        )
    except icontract.ViolationError as exception:
        raise ConfigError(
            f"The preparation {config.recipe.value} does not fit the model: "
            f"{exception}",
            path="preparation",
        )

    if preparation.dim != model.dim:
        raise ConfigError(
            f"The preparation {config.recipe.value} acts on dimension "
            f"{preparation.dim}, but the model has dimension {model.dim}",
            path="preparation",
        )

    return preparation


def _window_to_jsonable(
    window: Optional[spectra.ExponentialWindow],
) -> MutableMapping[str, Any]:
    if window is None:
        return {"kind": "none"}

    return {"kind": "exponential", "rate": window.rate}


def run_config_to_jsonable(config: RunConfig) -> MutableMapping[str, Any]:
    """Convert the configuration to a JSON-able mapping for the manifest."""
    model = config.model
    model_jsonable = dict()  # type: MutableMapping[str, Any]
    if model.explicit is not None:
        model_jsonable = model_to_jsonable(model.explicit)
    else:
        assert model.parameters is not None and model.bath is not None
        model_jsonable = {
            "kind": model.kind.value,
            "eps": model.parameters.eps,
            "delta": model.parameters.delta,
            "site_energies": (
                None
                if model.parameters.site_energies is None
                else list(model.parameters.site_energies)
            ),
            "site_couplings": [
                [i, j, v] for i, j, v in model.parameters.site_couplings
            ],
            "bath": {
                "family": model.bath.family.value,
                "lambda": model.bath.lam,
                "omega_c": model.bath.omega_c,
                "beta": model.bath.beta,
                "fit_tol": model.bath.fit_tol,
                "t_max": model.bath.t_max,
            },
        }

    numerics = config.numerics
    jsonable = {
        "model": model_jsonable,
        "task": config.task.value,
        "numerics": {
            "dt": numerics.dt,
            "tau_sample": numerics.tau_sample,
            "t_total": numerics.t_total,
            "depth": numerics.depth,
            "substeps": numerics.substeps,
            "scaled": numerics.scaled,
            "n_exp_terms": numerics.n_exp_terms,
            "window": _window_to_jsonable(numerics.window),
            "pad_factor": numerics.pad_factor,
            "transform": numerics.transform.value,
            "thresholds": {
                "tensor_tail": numerics.thresholds.tensor_tail,
                "inhom_tail": numerics.thresholds.inhom_tail,
                "floor": numerics.thresholds.floor,
            },
            "relaxation_tol": numerics.relaxation_tol,
            "relaxation_t_max": numerics.relaxation_t_max,
            "floor": numerics.floor,
            "sample_length": numerics.sample_length,
        },
        "output_dir": str(config.output_dir),
        "deterministic": config.deterministic,
    }  # type: MutableMapping[str, Any]

    if config.preparation is not None:
        jsonable["preparation"] = {
            "kind": config.preparation.recipe.value,
            "theta": config.preparation.theta,
            "target": (
                None
                if config.preparation.target is None
                else [[value.real, value.imag] for value in config.preparation.target]
            ),
        }

    if config.oracle is not None:
        jsonable["oracle"] = {
            "n_modes": config.oracle.n_modes,
            "omega_max": config.oracle.omega_max,
            "fock_cutoff": config.oracle.fock_cutoff,
            "dim_cap": config.oracle.dim_cap,
        }

    return jsonable


# endregion
