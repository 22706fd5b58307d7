import numpy as np
import pytest

from pfgp.errors import DimensionMismatchError, JitterCapExceededError, NotSymmetricError
from pfgp.linalg import JitterPolicy, chol_psd, solve_psd, sqrtm_psd, trace_product

from conftest import random_psd


class TestCholPsd:
    def test_identity(self):
        factor = chol_psd(np.eye(3))
        np.testing.assert_allclose(factor.lower, np.eye(3))
        assert factor.jitter_used == 0.0

    def test_known_factor(self):
        A = np.array([[4.0, 2.0], [2.0, 3.0]])
        factor = chol_psd(A)
        np.testing.assert_allclose(factor.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        np.testing.assert_allclose(factor.lower @ factor.lower.T, A, rtol=1e-12)

    def test_rank_one_needs_jitter(self):
        v = np.ones(2)
        A = np.outer(v, v)
        factor = chol_psd(A)
        assert factor.jitter_used > 0
        recon = factor.lower @ factor.lower.T
        np.testing.assert_allclose(recon, A + factor.jitter_used * np.eye(2), rtol=1e-10)

    def test_diagonal_positive(self, rng):
        A = random_psd(rng, 20)
        factor = chol_psd(A)
        assert np.all(np.diag(factor.lower) > 0)

    def test_not_symmetric(self, rng):
        A = rng.standard_normal((4, 4))
        with pytest.raises(NotSymmetricError):
            chol_psd(A + 3.0)

    def test_jitter_cap_exceeded(self):
        A = np.diag([1.0, -1.0])
        with pytest.raises(JitterCapExceededError):
            chol_psd(A)

    def test_reconstruction_tolerance(self, rng):
        A = random_psd(rng, 30)
        factor = chol_psd(A)
        recon = factor.lower @ factor.lower.T
        rel = np.linalg.norm(recon - A) / np.linalg.norm(A)
        assert rel < 1e-10

    def test_policy_rungs(self):
        policy = JitterPolicy(initial=1e-10, growth=10.0, cap=1e-4)
        rungs = list(policy.rungs(1.0))
        assert rungs[0] == pytest.approx(1e-10)
        assert rungs[-1] == pytest.approx(1e-4)
        assert len(rungs) == 7


class TestSolvePsd:
    def test_identity(self, rng):
        B = rng.standard_normal((4, 3))
        np.testing.assert_allclose(solve_psd(chol_psd(np.eye(4)), B), B)

    def test_known_solution(self):
        factor = chol_psd(np.array([[4.0, 2.0], [2.0, 3.0]]))
        x = solve_psd(factor, np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(x, [[3.0 / 8.0], [-1.0 / 4.0]], rtol=1e-12)

    def test_diagonal_inverse(self):
        factor = chol_psd(np.diag([2.0, 5.0]))
        np.testing.assert_allclose(solve_psd(factor, np.eye(2)), np.diag([0.5, 0.2]))

    def test_dimension_mismatch(self):
        factor = chol_psd(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            solve_psd(factor, np.zeros((4, 2)))

    def test_round_trip(self, rng):
        for n in (3, 10, 50):
            A = random_psd(rng, n)
            x0 = rng.standard_normal((n, 2))
            x = solve_psd(chol_psd(A), A @ x0)
            assert np.linalg.norm(x - x0) / np.linalg.norm(x0) < 1e-8


class TestTraceProduct:
    def test_identity(self):
        assert trace_product(np.eye(2), np.eye(2)) == pytest.approx(2.0)

    def test_explicit_product_oracle(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        B = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert trace_product(A, B) == pytest.approx(np.trace(A @ B))
        assert trace_product(A, B) == pytest.approx(5.0)

    def test_zero(self, rng):
        A = rng.standard_normal((4, 6))
        assert trace_product(A, np.zeros((6, 4))) == 0.0

    def test_integer_exactness(self, rng):
        A = rng.integers(-5, 5, size=(5, 7)).astype(float)
        B = rng.integers(-5, 5, size=(7, 5)).astype(float)
        assert trace_product(A, B) == np.trace(A @ B)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            trace_product(np.eye(2), np.zeros((3, 2)))


class TestSqrtmPsd:
    def test_diagonal(self):
        np.testing.assert_allclose(sqrtm_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_identity(self):
        np.testing.assert_allclose(sqrtm_psd(np.eye(5)), np.eye(5))

    def test_reconstruction(self, rng):
        W = rng.standard_normal((3, 3))
        A = W.T @ W
        S = sqrtm_psd(A)
        assert np.linalg.norm(S @ S - A) / np.linalg.norm(A) < 1e-8

    def test_symmetric_psd_output(self, rng):
        A = random_psd(rng, 8)
        S = sqrtm_psd(A)
        assert np.max(np.abs(S - S.T)) < 1e-12
        assert np.min(np.linalg.eigvalsh(S)) >= -1e-10 * np.linalg.norm(A)

    def test_not_symmetric(self, rng):
        with pytest.raises(NotSymmetricError):
            sqrtm_psd(rng.standard_normal((3, 3)) + 5.0)
