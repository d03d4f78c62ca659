"""
Learn dynamical maps, derive transfer tensors and extend short samples.

The product-state dynamics ``ρ(t_k) = E_k ρ(0)`` define the transfer tensors
through ``E_k = Σ_{m=1}^{k-1} T_{k-m} E_m + T_k``. A reduced trajectory from a
correlated initial state obeys

    ρ(t_n) = Σ_{k=1}^{n} T_k ρ(t_{n-k}) + I_n,

where the inhomogeneity ``I_n`` collects the effect of the initial
correlations. Once both ``T_k`` and ``I_n`` have decayed, the trajectory is
continued with the tensors alone.

All the objects act on a :py:class:`~kernelforge.operators.Block` of matrix
positions: the full space for density matrices, or an invariant block such as
the coherences between the excited levels and the ground level.
"""
import concurrent.futures
import logging
import math
import pathlib
from typing import Callable, Final, List, Optional, Sequence, Union

import numpy as np
from icontract import DBC, ensure, invariant, require

from kernelforge.common import (
    ComplexArray,
    DecayGateError,
    GateThreshold,
    RealArray,
)
from kernelforge.operators import Block, SuperOperator, Trajectory

LOGGER = logging.getLogger(__name__)

#: Largest accepted condition number of the Gram matrix of a learning basis
MAX_GRAM_CONDITION: Final = 1e12

#: Fraction of the tensors whose largest norm counts as the tail of the kernel
TENSOR_TAIL_FRACTION: Final = 0.1

#: Relative tolerance of the identity reconstructing the maps from the tensors
RECONSTRUCTION_TOL: Final = 1e-10

#: Relative norm of the entries outside the block that triggers a warning
LEAKAGE_TOL: Final = 1e-8

Sampler = Callable[[ComplexArray], Trajectory]


# region Bases


@require(lambda dim: dim >= 1)
@ensure(lambda dim, result: len(result) == dim * dim)
def hermitian_basis(dim: int) -> List[ComplexArray]:
    """
    Produce ``dim²`` pure states spanning all the ``dim × dim`` matrices.

    These are the projectors on ``|i⟩``, on ``(|i⟩ + |j⟩)/√2`` and on
    ``(|i⟩ + i|j⟩)/√2`` for ``i < j``.
    """
    identity = np.eye(dim, dtype=np.complex128)

    def projector(vector: ComplexArray) -> ComplexArray:
        return np.asarray(np.outer(vector, vector.conj()), dtype=np.complex128)

    result = [projector(identity[i]) for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            result.append(projector((identity[i] + identity[j]) / math.sqrt(2.0)))
            result.append(
                projector((identity[i] + 1.0j * identity[j]) / math.sqrt(2.0))
            )
    return result


@ensure(lambda block, result: len(result) == block.size)
def matrix_unit_basis(block: Block) -> List[ComplexArray]:
    """Produce the matrix units ``|r⟩⟨c|`` of the ``block`` positions."""
    result = []  # type: List[ComplexArray]
    for row, column in block.positions:
        unit = np.zeros((block.dim, block.dim), dtype=np.complex128)
        unit[row, column] = 1.0
        result.append(unit)
    return result


def basis_matrix(basis: Sequence[ComplexArray], block: Block) -> ComplexArray:
    """Stack the block vectors of the ``basis`` as columns."""
    return np.stack([block.extract(element) for element in basis], axis=1)


def gram_condition(basis: Sequence[ComplexArray], block: Block) -> float:
    """Compute the condition number of the Gram matrix of the ``basis``."""
    matrix = basis_matrix(basis, block)
    return float(np.linalg.cond(matrix.conj().T @ matrix))


# endregion

# region Maps and tensors


# fmt: off
@invariant(lambda self: self.dt > 0.0)
@invariant(
    lambda self:
    self.maps.ndim == 3
    and self.maps.shape[0] >= 1
    and self.maps.shape[1:] == (self.block.size, self.block.size),
    "One square map per time step, acting on the block"
)
# fmt: on
class DynamicalMapSeries(DBC):
    """Represent the maps ``E_1, ..., E_n`` of the product-state dynamics."""

    #: Grid spacing in units of 1/ε
    dt: Final[float]

    #: Maps as ``(n, size, size)`` matrices acting on block vectors
    maps: Final[ComplexArray]

    #: Matrix positions the maps act on
    block: Final[Block]

    #: Condition number of the Gram matrix of the learning basis
    condition: Final[float]

    def __init__(
        self, dt: float, maps: ComplexArray, block: Block, condition: float = 1.0
    ) -> None:
        """Initialize with a copy of ``maps``."""
        self.dt = float(dt)
        self.maps = np.array(maps, dtype=np.complex128)
        self.maps.setflags(write=False)
        self.block = block
        self.condition = condition

    def __len__(self) -> int:
        return int(self.maps.shape[0])

    @require(lambda self: self.block.is_full())
    @require(lambda self, k: 1 <= k <= len(self))
    def superoperator(self, k: int) -> SuperOperator:
        """Give ``E_k`` as a superoperator on the full space."""
        return SuperOperator(dim=self.block.dim, entries=self.maps[k - 1])


# fmt: off
@invariant(lambda self: self.dt > 0.0)
@invariant(
    lambda self:
    self.tensors.ndim == 3
    and self.tensors.shape[0] >= 1
    and self.tensors.shape[1:] == (self.block.size, self.block.size),
    "One square tensor per time step, acting on the block"
)
@invariant(lambda self: self.norms.shape == (self.tensors.shape[0],))
# fmt: on
class TransferTensors(DBC):
    """Represent ``T_1, ..., T_K`` with their Frobenius norms."""

    #: Grid spacing in units of 1/ε
    dt: Final[float]

    #: Tensors as ``(K, size, size)`` matrices acting on block vectors
    tensors: Final[ComplexArray]

    #: Frobenius norm of every tensor
    norms: Final[RealArray]

    #: Matrix positions the tensors act on
    block: Final[Block]

    def __init__(self, dt: float, tensors: ComplexArray, block: Block) -> None:
        """Initialize with a copy of ``tensors`` and compute their norms."""
        self.dt = float(dt)
        self.tensors = np.array(tensors, dtype=np.complex128)
        self.tensors.setflags(write=False)
        self.norms = np.linalg.norm(self.tensors, axis=(1, 2))
        self.norms.setflags(write=False)
        self.block = block

    @property
    def memory(self) -> int:
        """Give the number of tensors ``K``."""
        return int(self.tensors.shape[0])

    @require(lambda self: self.block.is_full())
    @require(lambda self, k: 1 <= k <= self.memory)
    def superoperator(self, k: int) -> SuperOperator:
        """Give ``T_k`` as a superoperator on the full space."""
        return SuperOperator(dim=self.block.dim, entries=self.tensors[k - 1])


def sample_concurrently(
    sampler: Sampler,
    initials: Sequence[ComplexArray],
    max_workers: Optional[int] = None,
) -> List[Trajectory]:
    """
    Call the ``sampler`` on every initial matrix.

    The calls are independent and may run in parallel; the results keep the
    order of ``initials``.
    """
    if max_workers == 1 or len(initials) <= 1:
        return [sampler(initial) for initial in initials]

    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(sampler, initials))


def _leakage(trajectory: Trajectory, block: Block) -> float:
    """Compute the largest norm outside the block relative to the one inside."""
    values = trajectory.values
    inside = block.embed_stack(block.extract_stack(values))
    outside = np.linalg.norm(values - inside, axis=(1, 2))
    reference = max(float(np.max(np.linalg.norm(inside, axis=(1, 2)))), 1e-300)
    return float(np.max(outside)) / reference


@require(lambda basis: len(basis) >= 1)
@require(
    lambda basis, block: block is None
    or all(element.shape == (block.dim, block.dim) for element in basis)
)
@require(
    lambda basis, block: len(basis)
    == (basis[0].shape[0] ** 2 if block is None else block.size),
    "The basis has exactly as many elements as the block has positions",
)
@require(
    lambda basis, block: gram_condition(
        basis, Block.full(basis[0].shape[0]) if block is None else block
    )
    <= MAX_GRAM_CONDITION,
    "Linearly independent basis",
)
@require(lambda times: len(times) >= 2)
@ensure(lambda times, result: len(result) == len(times) - 1)
def learn_maps(
    sampler: Sampler,
    basis: Sequence[ComplexArray],
    times: Sequence[float],
    block: Optional[Block] = None,
    max_workers: Optional[int] = None,
) -> DynamicalMapSeries:
    """
    Learn the maps ``E_k`` from the product-state samples of the ``basis``.

    The ``sampler`` evolves an initial reduced matrix on the grid ``times``.
    With ``S_k`` the sampled block vectors as columns and ``B`` the initial
    ones, the maps are ``E_k = S_k B⁻¹``. The block defaults to the full
    space.
    """
    dim = basis[0].shape[0]
    if block is None:
        block = Block.full(dim)

    times_array = np.asarray(times, dtype=np.float64)
    dt = float(times_array[1] - times_array[0])

    initial = basis_matrix(basis, block)
    condition = gram_condition(basis, block)
    LOGGER.info(
        "Learning %d maps on a block of size %d (Gram condition %.3e)",
        len(times_array) - 1,
        block.size,
        condition,
    )

    trajectories = sample_concurrently(sampler, basis, max_workers=max_workers)

    sampled = np.empty(
        (len(times_array) - 1, block.size, len(basis)), dtype=np.complex128
    )
    for position, trajectory in enumerate(trajectories):
        assert len(trajectory) == len(times_array), (
            f"Expected the sampler to return {len(times_array)} time points, "
            f"got {len(trajectory)}"
        )
        leakage = _leakage(trajectory, block)
        if leakage > LEAKAGE_TOL:
            LOGGER.warning(
                "The sample of basis element %d leaves the block "
                "(relative norm %.3e outside)",
                position,
                leakage,
            )
        sampled[:, :, position] = block.extract_stack(trajectory.values)[1:]

    # E_k B = S_k, solved as B^T E_k^T = S_k^T
    transposed = np.linalg.solve(
        np.broadcast_to(initial.T, (sampled.shape[0],) + initial.shape),
        np.swapaxes(sampled, 1, 2),
    )
    maps = np.swapaxes(transposed, 1, 2)

    return DynamicalMapSeries(dt=dt, maps=maps, block=block, condition=condition)


def reconstruction_error(maps: DynamicalMapSeries, tensors: TransferTensors) -> float:
    """
    Compute the largest deviation of ``Σ T_{k-m} E_m + T_k`` from ``E_k``.

    The deviation is relative to the largest Frobenius norm of the maps and
    tensors, but at least one.
    """
    count = min(len(maps), tensors.memory)
    largest = 0.0
    for index in range(count):
        rebuilt = tensors.tensors[index].copy()
        if index > 0:
            rebuilt += np.sum(
                np.matmul(tensors.tensors[index - 1 :: -1], maps.maps[:index]), axis=0
            )
        largest = max(largest, float(np.max(np.abs(rebuilt - maps.maps[index]))))

    scale = max(
        1.0,
        float(np.max(np.linalg.norm(maps.maps, axis=(1, 2)))),
        float(np.max(tensors.norms)),
    )
    return largest / scale


@ensure(lambda maps, result: result.memory == len(maps))
@ensure(lambda maps, result: result.block == maps.block)
@ensure(
    lambda maps, result: reconstruction_error(maps, result) <= RECONSTRUCTION_TOL,
    "The tensors reconstruct the maps",
)
def tensors_from_maps(maps: DynamicalMapSeries) -> TransferTensors:
    """
    Compute the transfer tensors recursively.

    ``T_1 = E_1`` and ``T_k = E_k - Σ_{m=1}^{k-1} T_{k-m} E_m``.
    """
    tensors = np.empty_like(maps.maps)
    tensors[0] = maps.maps[0]
    for index in range(1, len(maps)):
        tensors[index] = maps.maps[index] - np.sum(
            np.matmul(tensors[index - 1 :: -1], maps.maps[:index]), axis=0
        )

    result = TransferTensors(dt=maps.dt, tensors=tensors, block=maps.block)
    LOGGER.debug(
        "Transfer tensor norms decay from %.3e to %.3e over %d steps",
        result.norms[0],
        result.norms[-1],
        result.memory,
    )
    return result


def _tensor_sum(tensors: ComplexArray, history: ComplexArray, n: int) -> ComplexArray:
    """Compute ``Σ_{k=1}^{min(n, K)} T_k y_{n-k}`` from the block vectors."""
    count = min(n, tensors.shape[0])
    return np.asarray(
        np.einsum("kij,kj->i", tensors[:count], history[n - count : n][::-1]),
        dtype=np.complex128,
    )


# endregion

# region Inhomogeneity


# fmt: off
@invariant(lambda self: self.dt > 0.0)
@invariant(
    lambda self:
    self.terms.ndim == 2 and self.terms.shape[1] == self.block.size,
    "One block vector per term"
)
@invariant(lambda self: self.norms.shape == (self.terms.shape[0],))
# fmt: on
class InhomogeneousSeries(DBC):
    """
    Represent the terms ``I_1, ..., I_{L-1}`` of a sample of length ``L``.

    A sample of a single time point has no terms.
    """

    #: Grid spacing in units of 1/ε
    dt: Final[float]

    #: Terms as block vectors, ``(L - 1, size)``
    terms: Final[ComplexArray]

    #: Frobenius norm of every term
    norms: Final[RealArray]

    #: Matrix positions the terms live on
    block: Final[Block]

    def __init__(self, dt: float, terms: ComplexArray, block: Block) -> None:
        """Initialize with a copy of ``terms`` and compute their norms."""
        self.dt = float(dt)
        self.terms = np.array(terms, dtype=np.complex128)
        self.terms.setflags(write=False)
        self.norms = np.linalg.norm(self.terms, axis=1)
        self.norms.setflags(write=False)
        self.block = block

    def __len__(self) -> int:
        return int(self.terms.shape[0])

    def matrices(self) -> ComplexArray:
        """Give the terms as ``(L - 1, dim, dim)`` matrices."""
        if len(self) == 0:
            return np.zeros((0, self.block.dim, self.block.dim), dtype=np.complex128)

        return self.block.embed_stack(self.terms)


def _grids_match(tensors: TransferTensors, sample: Trajectory) -> bool:
    if len(sample) < 2:
        return True

    return abs(sample.dt - tensors.dt) <= 1e-9 * tensors.dt


@require(lambda tensors, sample: sample.dim == tensors.block.dim)
@require(
    lambda tensors, sample: _grids_match(tensors, sample),
    "The sample has the grid spacing of the tensors",
)
@ensure(lambda sample, result: len(result) == len(sample) - 1)
def inhomogeneity(tensors: TransferTensors, sample: Trajectory) -> InhomogeneousSeries:
    """
    Compute ``I_n = ρ(t_n) - Σ_{k=1}^{min(n, K)} T_k ρ(t_{n-k})``.

    The first time point of the ``sample`` is its initial state.
    """
    block = tensors.block
    history = block.extract_stack(sample.values)

    terms = np.empty((len(sample) - 1, block.size), dtype=np.complex128)
    for n in range(1, len(sample)):
        terms[n - 1] = history[n] - _tensor_sum(tensors.tensors, history, n)

    return InhomogeneousSeries(dt=tensors.dt, terms=terms, block=block)


# endregion

# region Decay gate


# fmt: off
@invariant(lambda self: 0.0 < self.tensor_tail <= 1.0)
@invariant(lambda self: 0.0 < self.inhom_tail <= 1.0)
@invariant(lambda self: self.floor >= 0.0)
# fmt: on
class DecayThresholds(DBC):
    """Define when the tensors and the inhomogeneity count as decayed."""

    #: Largest tail norm of the tensors relative to their largest norm
    tensor_tail: Final[float]

    #: Largest final inhomogeneity norm relative to the largest one
    inhom_tail: Final[float]

    #: Absolute norm below which a tail always passes
    floor: Final[float]

    def __init__(
        self,
        tensor_tail: float = 1e-3,
        inhom_tail: float = 1e-2,
        floor: float = 1e-10,
    ) -> None:
        """Initialize with the given values."""
        self.tensor_tail = tensor_tail
        self.inhom_tail = inhom_tail
        self.floor = floor


class DecayReport:
    """Report the norms of the tensors and inhomogeneities with the gate."""

    #: Grid spacing in units of 1/ε
    dt: Final[float]

    #: ``‖T_k‖`` for ``k = 1, ..., K``
    tensor_norms: Final[RealArray]

    #: ``‖I_n‖`` for ``n = 1, ..., L - 1``
    inhom_norms: Final[RealArray]

    thresholds: Final[DecayThresholds]

    #: Tail norm of the tensors relative to their largest norm
    tensor_ratio: Final[float]

    #: Final inhomogeneity norm relative to the largest one
    inhom_ratio: Final[float]

    tensor_passed: Final[bool]
    inhom_passed: Final[bool]

    def __init__(
        self,
        dt: float,
        tensor_norms: RealArray,
        inhom_norms: RealArray,
        thresholds: DecayThresholds,
        tensor_ratio: float,
        inhom_ratio: float,
        tensor_passed: bool,
        inhom_passed: bool,
    ) -> None:
        """Initialize with the given values."""
        self.dt = dt
        self.tensor_norms = tensor_norms
        self.inhom_norms = inhom_norms
        self.thresholds = thresholds
        self.tensor_ratio = tensor_ratio
        self.inhom_ratio = inhom_ratio
        self.tensor_passed = tensor_passed
        self.inhom_passed = inhom_passed

    @property
    def failed(self) -> List[GateThreshold]:
        """List the thresholds that were not met."""
        result = []  # type: List[GateThreshold]
        if not self.tensor_passed:
            result.append(GateThreshold.TENSOR_TAIL)
        if not self.inhom_passed:
            result.append(GateThreshold.INHOM_TAIL)
        return result

    @property
    def passed(self) -> bool:
        """Check that the whole gate passed."""
        return self.tensor_passed and self.inhom_passed


def _combined_norms(
    inhom: Union[None, InhomogeneousSeries, Sequence[InhomogeneousSeries]]
) -> RealArray:
    """Combine the norms of several series sample-wise as a root sum of squares."""
    if inhom is None:
        return np.zeros(0, dtype=np.float64)

    if isinstance(inhom, InhomogeneousSeries):
        return np.array(inhom.norms, dtype=np.float64)

    if len(inhom) == 0:
        return np.zeros(0, dtype=np.float64)

    lengths = {len(series) for series in inhom}
    assert len(lengths) == 1, f"Expected series of equal length, got {lengths}"
    return np.sqrt(np.sum([series.norms**2 for series in inhom], axis=0))


def decay_report(
    tensors: TransferTensors,
    inhom: Union[None, InhomogeneousSeries, Sequence[InhomogeneousSeries]],
    thresholds: DecayThresholds = DecayThresholds(),
) -> DecayReport:
    """
    Evaluate the decay gate.

    The tensor tail is the largest norm among the final tenth of the tensors
    (at least one), compared to the largest norm overall. The inhomogeneity
    tail is its final norm, compared to the largest one. Several ``inhom``
    series, such as one per preparation, are combined sample-wise. A tail
    below the absolute floor always passes, as does a missing inhomogeneity.
    """
    tensor_norms = np.array(tensors.norms, dtype=np.float64)
    tail_length = max(1, int(math.ceil(TENSOR_TAIL_FRACTION * len(tensor_norms))))
    tensor_tail = float(np.max(tensor_norms[-tail_length:]))
    tensor_peak = float(np.max(tensor_norms))
    tensor_ratio = tensor_tail / tensor_peak if tensor_peak > 0.0 else 0.0
    tensor_passed = (
        tensor_tail <= thresholds.floor or tensor_ratio <= thresholds.tensor_tail
    )

    inhom_norms = _combined_norms(inhom)
    if len(inhom_norms) == 0:
        inhom_ratio = 0.0
        inhom_passed = True
    else:
        inhom_last = float(inhom_norms[-1])
        inhom_peak = float(np.max(inhom_norms))
        inhom_ratio = inhom_last / inhom_peak if inhom_peak > 0.0 else 0.0
        inhom_passed = (
            inhom_last <= thresholds.floor or inhom_ratio <= thresholds.inhom_tail
        )

    LOGGER.info(
        "Decay gate: tensor tail ratio %.3e (%s), inhomogeneity ratio %.3e (%s)",
        tensor_ratio,
        "passed" if tensor_passed else "failed",
        inhom_ratio,
        "passed" if inhom_passed else "failed",
    )

    return DecayReport(
        dt=tensors.dt,
        tensor_norms=tensor_norms,
        inhom_norms=inhom_norms,
        thresholds=thresholds,
        tensor_ratio=tensor_ratio,
        inhom_ratio=inhom_ratio,
        tensor_passed=tensor_passed,
        inhom_passed=inhom_passed,
    )


def check_gate(report: DecayReport) -> None:
    """
    Make sure the decay gate passed.

    :raise: :py:class:`DecayGateError` naming the failed thresholds
    """
    if report.passed:
        return

    parts = []  # type: List[str]
    if not report.tensor_passed:
        parts.append(
            f"{GateThreshold.TENSOR_TAIL.value}: the tensor tail ratio "
            f"{report.tensor_ratio:.3e} exceeds "
            f"{report.thresholds.tensor_tail:.1e}"
        )
    if not report.inhom_passed:
        parts.append(
            f"{GateThreshold.INHOM_TAIL.value}: the inhomogeneity ratio "
            f"{report.inhom_ratio:.3e} exceeds {report.thresholds.inhom_tail:.1e}"
        )
    raise DecayGateError(
        "The decay gate failed, consider a longer sampling window; "
        + "; ".join(parts),
        failed=report.failed,
    )


def write_norms_csv(report: DecayReport, path: pathlib.Path) -> None:
    """
    Write the norms as CSV with the columns ``k, t, norm_T, norm_I``.

    Rows beyond the tensors or the inhomogeneity terms carry ``nan``.
    """
    count = max(len(report.tensor_norms), len(report.inhom_norms))
    table = np.full((count, 4), np.nan, dtype=np.float64)
    steps = np.arange(1, count + 1, dtype=np.float64)
    table[:, 0] = steps
    table[:, 1] = report.dt * steps
    table[: len(report.tensor_norms), 2] = report.tensor_norms
    table[: len(report.inhom_norms), 3] = report.inhom_norms

    np.savetxt(
        str(path),
        table,
        delimiter=",",
        header="k,t,norm_T,norm_I",
        comments="",
        fmt=["%d", "%.17g", "%.17g", "%.17g"],
    )


# endregion

# region Propagation


@require(lambda tensors, sample: sample.dim == tensors.block.dim)
@require(lambda tensors, sample: _grids_match(tensors, sample))
@require(lambda sample, n_total: n_total >= len(sample))
@ensure(lambda n_total, result: len(result) == n_total)
@ensure(
    lambda sample, result: np.array_equal(
        result.values[: len(sample)], sample.values
    ),
    "The sample is kept as-is",
)
def propagate_with_tensors(
    tensors: TransferTensors, sample: Trajectory, n_total: int
) -> Trajectory:
    """
    Continue the ``sample`` to ``n_total`` points with the tensors alone.

    Beyond the sample ``ρ(t_n) = Σ_{k=1}^{min(n, K)} T_k ρ(t_{n-k})``; the
    continuation is zero outside the block.
    """
    block = tensors.block
    history = np.zeros((n_total, block.size), dtype=np.complex128)
    history[: len(sample)] = block.extract_stack(sample.values)

    for n in range(len(sample), n_total):
        history[n] = _tensor_sum(tensors.tensors, history, n)

    values = np.empty((n_total, block.dim, block.dim), dtype=np.complex128)
    values[: len(sample)] = sample.values
    if n_total > len(sample):
        values[len(sample) :] = block.embed_stack(history[len(sample) :])

    times = sample.times[0] + tensors.dt * np.arange(n_total, dtype=np.float64)
    return Trajectory(times=times, values=values)


@require(lambda tensors, sample: sample.dim == tensors.block.dim)
@require(lambda tensors, sample: _grids_match(tensors, sample))
@require(lambda sample, n_total: n_total >= len(sample))
@ensure(lambda n_total, result: len(result) == n_total)
def extend_trajectory(
    tensors: TransferTensors,
    sample: Trajectory,
    n_total: int,
    thresholds: DecayThresholds = DecayThresholds(),
) -> Trajectory:
    """
    Check the decay gate on the ``sample`` and continue it with the tensors.

    Truncating the correlated sample to a single time point neglects the
    initial correlations; the full sample accounts for them.

    :raise: :py:class:`DecayGateError` if the tensors or the inhomogeneity
        did not decay enough
    """
    report = decay_report(tensors, inhomogeneity(tensors, sample), thresholds)
    check_gate(report)
    return propagate_with_tensors(tensors, sample, n_total)


# endregion
