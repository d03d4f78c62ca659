import pathlib
import tempfile
import unittest

import icontract
import numpy as np

from kernelforge.operators import (
    Block,
    DensityMatrix,
    SuperOperator,
    Trajectory,
    apply,
    compose_maps,
    cumulative_trace_distance,
    expectation,
    pointwise_trace_distance,
    read_trajectory_csv,
    superoperator_from_sandwich,
    trace_distance,
    unvectorize,
    vectorize,
    write_trajectory_csv,
)

# pylint: disable=missing-docstring


class Test_vectorize(unittest.TestCase):
    def test_column_major(self) -> None:
        matrix = np.array([[1, 2], [3, 4]], dtype=np.complex128)
        np.testing.assert_array_equal(vectorize(matrix), [1, 3, 2, 4])

    def test_inverse(self) -> None:
        matrix = np.arange(9, dtype=np.complex128).reshape(3, 3) * (1 + 2j)
        np.testing.assert_array_equal(unvectorize(vectorize(matrix)), matrix)

    def test_sandwich_identity(self) -> None:
        rng = np.random.default_rng(seed=1)
        left = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        right = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))

        got = apply(superoperator_from_sandwich(left, right), rho)
        np.testing.assert_allclose(got, left @ rho @ right.conj().T, atol=1e-12)


class Test_compose_maps(unittest.TestCase):
    def test_right_applied_first(self) -> None:
        first = superoperator_from_sandwich(
            np.array([[0, 1], [1, 0]], dtype=np.complex128), np.eye(2)
        )
        second = superoperator_from_sandwich(
            np.diag([1.0, 2.0]).astype(np.complex128), np.eye(2)
        )
        rho = np.array([[1, 0], [0, 0]], dtype=np.complex128)

        got = apply(compose_maps(second, first), rho)
        np.testing.assert_allclose(got, [[0, 0], [2, 0]], atol=1e-15)

    def test_identity(self) -> None:
        rho = np.array([[0.5, 0.1j], [-0.1j, 0.5]])
        np.testing.assert_allclose(apply(SuperOperator.identity(2), rho), rho)


class Test_DensityMatrix(unittest.TestCase):
    def test_valid(self) -> None:
        rho = DensityMatrix(np.array([[0.75, 0.25], [0.25, 0.25]]))
        self.assertEqual(2, rho.dim)

    def test_non_unit_trace_rejected(self) -> None:
        with self.assertRaises(icontract.ViolationError):
            DensityMatrix(np.diag([1.0, 1.0]))

    def test_negative_eigenvalue_rejected(self) -> None:
        with self.assertRaises(icontract.ViolationError):
            DensityMatrix(np.diag([1.5, -0.5]))


class Test_trace_distance(unittest.TestCase):
    def test_orthogonal_states(self) -> None:
        self.assertAlmostEqual(
            1.0, trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        )

    def test_identical_states(self) -> None:
        rho = np.array([[0.5, 0.5], [0.5, 0.5]])
        self.assertAlmostEqual(0.0, trace_distance(rho, rho))


class Test_Block(unittest.TestCase):
    def test_full_coincides_with_vectorize(self) -> None:
        matrix = np.arange(9, dtype=np.complex128).reshape(3, 3)
        np.testing.assert_array_equal(Block.full(3).extract(matrix), vectorize(matrix))
        self.assertTrue(Block.full(3).is_full())

    def test_coherence(self) -> None:
        block = Block.coherence(dim=3, excited=[0, 1], ground=2)
        self.assertEqual(((0, 2), (1, 2)), block.positions)
        self.assertFalse(block.is_full())

        matrix = np.arange(9, dtype=np.complex128).reshape(3, 3)
        np.testing.assert_array_equal(block.extract(matrix), [2, 5])

        embedded = block.embed(np.array([2, 5], dtype=np.complex128))
        expected = np.zeros((3, 3), dtype=np.complex128)
        expected[0, 2] = 2
        expected[1, 2] = 5
        np.testing.assert_array_equal(embedded, expected)

    def test_stacks(self) -> None:
        block = Block.coherence(dim=2, excited=[0], ground=1)
        stack = np.arange(8, dtype=np.complex128).reshape(2, 2, 2)
        vectors = block.extract_stack(stack)
        np.testing.assert_array_equal(vectors, [[1], [5]])
        np.testing.assert_array_equal(
            block.embed_stack(vectors)[:, 0, 1], stack[:, 0, 1]
        )

    def test_equality(self) -> None:
        self.assertEqual(Block.full(2), Block.full(2))
        self.assertNotEqual(Block.full(2), Block.coherence(2, [0], 1))

    def test_duplicate_positions_rejected(self) -> None:
        with self.assertRaises(icontract.ViolationError):
            Block(dim=2, positions=[(0, 1), (0, 1)])


def _decaying_trajectory(dt: float, count: int) -> Trajectory:
    values = np.zeros((count, 2, 2), dtype=np.complex128)
    for n in range(count):
        population = np.exp(-0.1 * n * dt)
        values[n] = np.diag([population, 1.0 - population])
    return Trajectory.on_grid(dt, values)


class Test_Trajectory(unittest.TestCase):
    def test_on_grid(self) -> None:
        trajectory = _decaying_trajectory(dt=0.5, count=4)
        np.testing.assert_allclose(trajectory.times, [0.0, 0.5, 1.0, 1.5])
        self.assertEqual(0.5, trajectory.dt)
        self.assertEqual(2, trajectory.dim)

    def test_truncated(self) -> None:
        trajectory = _decaying_trajectory(dt=0.5, count=4).truncated(2)
        self.assertEqual(2, len(trajectory))

    def test_non_uniform_grid_rejected(self) -> None:
        with self.assertRaises(icontract.ViolationError):
            Trajectory(times=[0.0, 1.0, 3.0], values=np.zeros((3, 2, 2)))

    def test_expectation(self) -> None:
        trajectory = _decaying_trajectory(dt=1.0, count=3)
        np.testing.assert_allclose(
            expectation(trajectory, np.diag([1.0, 0.0]).astype(np.complex128)),
            np.exp(-0.1 * np.arange(3)),
        )


class Test_cumulative_trace_distance(unittest.TestCase):
    def test_against_itself(self) -> None:
        trajectory = _decaying_trajectory(dt=0.1, count=11)
        self.assertEqual(0.0, cumulative_trace_distance(trajectory, trajectory, 1.0))

    def test_constant_distance(self) -> None:
        count = 11
        up = Trajectory.on_grid(0.1, np.tile(np.diag([1.0, 0.0]), (count, 1, 1)))
        down = Trajectory.on_grid(0.1, np.tile(np.diag([0.0, 1.0]), (count, 1, 1)))

        np.testing.assert_allclose(pointwise_trace_distance(up, down), np.ones(count))
        self.assertAlmostEqual(1.0, cumulative_trace_distance(up, down, 1.0))

        # The horizon between grid points is interpolated.
        self.assertAlmostEqual(0.55, cumulative_trace_distance(up, down, 0.55))

    def test_horizon_beyond_grid_rejected(self) -> None:
        trajectory = _decaying_trajectory(dt=0.1, count=11)
        with self.assertRaises(icontract.ViolationError):
            cumulative_trace_distance(trajectory, trajectory, 2.0)


class Test_trajectory_csv(unittest.TestCase):
    def test_bit_exact(self) -> None:
        rng = np.random.default_rng(seed=7)
        values = rng.normal(size=(5, 2, 2)) + 1j * rng.normal(size=(5, 2, 2))
        trajectory = Trajectory.on_grid(0.05, values)

        with tempfile.TemporaryDirectory() as tmp_dir:
            path = pathlib.Path(tmp_dir) / "trajectory.csv"
            write_trajectory_csv(trajectory, path)

            header = path.read_text(encoding="utf-8").splitlines()[0]
            self.assertEqual(
                "t,re_0_0,im_0_0,re_0_1,im_0_1,re_1_0,im_1_0,re_1_1,im_1_1", header
            )

            read, error = read_trajectory_csv(path)

        assert error is None, error
        assert read is not None
        np.testing.assert_array_equal(read.values, trajectory.values)
        np.testing.assert_array_equal(read.times, trajectory.times)

    def test_unexpected_header(self) -> None:
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = pathlib.Path(tmp_dir) / "trajectory.csv"
            path.write_text("time,a,b\n0,1,2\n", encoding="utf-8")
            read, error = read_trajectory_csv(path)

        self.assertIsNone(read)
        assert error is not None
        self.assertIn("Unexpected header", error)


if __name__ == "__main__":
    unittest.main()
