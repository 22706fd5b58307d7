import numpy as np
import pytest

from pfgp.errors import DimensionMismatchError
from pfgp.kernels import KernelParams, as_inputs, kernel_diag, kernel_matrix
from pfgp.linalg import chol_psd


class TestKernelParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            KernelParams(np.array([0.0]), 1.0, 1.0)
        with pytest.raises(ValueError):
            KernelParams(np.array([1.0]), -1.0, 1.0)
        with pytest.raises(ValueError):
            KernelParams(np.array([1.0]), 1.0, 0.0)

    def test_dim(self):
        assert KernelParams(np.array([1.0, 2.0]), 1.0, 0.1).dim == 2


class TestKernelMatrix:
    def test_self_value(self):
        p = KernelParams(np.array([1.0]), 1.0, 1.0)
        K = kernel_matrix(np.array([[0.0]]), np.array([[0.0]]), p)
        np.testing.assert_allclose(K, [[1.0]])

    def test_unit_se_at_distance_one(self):
        # k(0, 1) = exp(-1/2) for the unit squared-exponential kernel
        p = KernelParams(np.array([1.0]), 1.0, 1.0)
        K = kernel_matrix(np.array([[0.0]]), np.array([[1.0]]), p)
        np.testing.assert_allclose(K, [[np.exp(-0.5)]], rtol=1e-12)
        assert K[0, 0] == pytest.approx(0.60653, abs=1e-5)

    def test_constant_limit_large_lengthscale(self, rng):
        p = KernelParams(np.array([1e8]), 2.0, 1.0)
        A = rng.uniform(-5, 5, size=(4, 1))
        B = rng.uniform(-5, 5, size=(3, 1))
        np.testing.assert_allclose(kernel_matrix(A, B, p), 2.0, rtol=1e-10)

    def test_symmetric_psd(self, rng, params_2d):
        X = rng.uniform(-3, 3, size=(200, 2))
        K = kernel_matrix(X, None, params_2d)
        np.testing.assert_array_equal(K, K.T)
        factor = chol_psd(K)
        assert factor.jitter_used <= 1e-6 * params_2d.signal_variance

    def test_stationarity(self, rng, params_2d):
        A = rng.uniform(-2, 2, size=(6, 2))
        B = rng.uniform(-2, 2, size=(5, 2))
        shift = np.array([0.7, -1.3])
        K0 = kernel_matrix(A, B, params_2d)
        K1 = kernel_matrix(A + shift, B + shift, params_2d)
        np.testing.assert_allclose(K0, K1, atol=1e-12)

    def test_transpose_exact(self, rng, params_2d):
        A = rng.uniform(-2, 2, size=(6, 2))
        B = rng.uniform(-2, 2, size=(4, 2))
        np.testing.assert_array_equal(kernel_matrix(A, B, params_2d),
                                      kernel_matrix(B, A, params_2d).T)

    def test_dimension_mismatch(self, params_2d):
        with pytest.raises(DimensionMismatchError):
            kernel_matrix(np.zeros((3, 1)), np.zeros((3, 1)), params_2d)


class TestKernelDiag:
    def test_unit_variance(self, rng):
        p = KernelParams(np.array([1.0]), 1.0, 0.5)
        np.testing.assert_array_equal(kernel_diag(rng.standard_normal((7, 1)), p),
                                      np.ones(7))

    def test_scaled_variance(self, rng):
        p = KernelParams(np.array([1.0, 1.0]), 2.5, 0.5)
        np.testing.assert_array_equal(kernel_diag(rng.standard_normal((4, 2)), p),
                                      np.full(4, 2.5))

    def test_matches_matrix_diagonal(self, rng, params_2d):
        A = rng.uniform(-2, 2, size=(9, 2))
        np.testing.assert_allclose(kernel_diag(A, params_2d),
                                   np.diag(kernel_matrix(A, None, params_2d)))


class TestAsInputs:
    def test_promotes_1d(self):
        X = as_inputs(np.arange(4.0))
        assert X.shape == (4, 1)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            as_inputs(np.array([[np.nan]]))
