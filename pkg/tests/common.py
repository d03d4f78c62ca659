"""Provide common functionalities used across the tests."""
import os
from typing import Optional, Sequence, Tuple

from kernelforge import bath
from kernelforge.models import (
    BathFamily,
    BathSpec,
    HamiltonianModel,
    ModelKind,
    ModelParameters,
    build_model,
    drude_lorentz_bath,
)


def slow_tests_enabled() -> bool:
    """Check whether the expensive end-to-end tests should run."""
    return os.environ.get("KERNELFORGE_SLOW", "0").lower() in ("1", "true", "yes")


def drude(lam: float = 0.1, omega_c: float = 1.0, beta: float = 1.0) -> BathSpec:
    """Give a Drude-Lorentz bath with the high-temperature kernel."""
    return drude_lorentz_bath(lam=lam, omega_c=omega_c, beta=beta)


def ohmic(
    lam: float = 0.1,
    omega_c: float = 1.0,
    beta: float = 1.0,
    n_terms: Optional[int] = None,
) -> BathSpec:
    """Give an Ohmic bath with its fitted exponential expansion."""
    return bath.make_bath_spec(
        family=BathFamily.OHMIC_EXP,
        lam=lam,
        omega_c=omega_c,
        beta=beta,
        n_terms=bath.DEFAULT_N_TERMS if n_terms is None else n_terms,
    )


def spin_boson(
    spec: BathSpec, eps: float = 1.0, delta: float = 1.0
) -> HamiltonianModel:
    """Build the spin-boson model coupled to ``spec``."""
    return build_model(
        ModelKind.SPIN_BOSON, ModelParameters(bath=spec, eps=eps, delta=delta)
    )


def pure_dephasing(spec: BathSpec, eps: float = 1.0) -> HamiltonianModel:
    """Build the pure-dephasing model coupled to ``spec``."""
    return build_model(ModelKind.PURE_DEPHASING, ModelParameters(bath=spec, eps=eps))


def chromophoric(
    spec: BathSpec,
    site_energies: Sequence[float] = (1.0,),
    site_couplings: Sequence[Tuple[int, int, float]] = (),
) -> HamiltonianModel:
    """Build the chromophoric model with the excited levels ``site_energies``."""
    return build_model(
        ModelKind.CHROMOPHORIC,
        ModelParameters(
            bath=spec, site_energies=site_energies, site_couplings=site_couplings
        ),
    )
