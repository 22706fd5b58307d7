import numpy as np
import pytest

from pfgp.exact import fit_exact, log_marginal_likelihood, predict_exact
from pfgp.kernels import KernelParams, kernel_diag, kernel_matrix


def _unit_params(noise):
    return KernelParams(np.array([1.0]), 1.0, noise)


class TestFitExact:
    def test_single_point_alpha(self):
        # k(0,0)=1 with noise s2: alpha = t / (1 + s2)
        for s2, t in ((1.0, 1.0), (0.5, -2.0)):
            post = fit_exact(np.array([[0.0]]), np.array([t]), _unit_params(s2))
            np.testing.assert_allclose(post.alpha, [t / (1.0 + s2)], rtol=1e-12)

    def test_zero_targets(self, rng, params_2d):
        X = rng.uniform(-2, 2, size=(8, 2))
        post = fit_exact(X, np.zeros(8), params_2d)
        np.testing.assert_array_equal(post.alpha, np.zeros(8))

    def test_two_point_closed_form(self, rng):
        p = _unit_params(0.3)
        X = np.array([[0.0], [1.1]])
        y = rng.standard_normal(2)
        post = fit_exact(X, y, p)
        K = kernel_matrix(X, None, p) + 0.3 * np.eye(2)
        a, b, c = K[0, 0], K[0, 1], K[1, 1]
        inv = np.array([[c, -b], [-b, a]]) / (a * c - b * b)
        np.testing.assert_allclose(post.alpha, inv @ y, rtol=1e-10)

    def test_residual_invariant(self, rng, params_2d):
        X = rng.uniform(-2, 2, size=(20, 2))
        y = rng.standard_normal(20)
        post = fit_exact(X, y, params_2d)
        K = kernel_matrix(X, None, params_2d) + params_2d.noise_variance * np.eye(20)
        resid = np.linalg.norm(K @ post.alpha - y) / np.linalg.norm(y)
        assert resid < 1e-8

    def test_n_guard(self, rng, params_1d):
        X = rng.uniform(-1, 1, size=(30, 1))
        with pytest.raises(ValueError):
            fit_exact(X, np.zeros(30), params_1d, n_cap=10)


class TestPredictExact:
    def test_single_datum_posterior(self):
        # N=1 at x=0, y=1, s2=1: posterior mean 0.5, variance 0.5 at x*=0
        post = fit_exact(np.array([[0.0]]), np.array([1.0]), _unit_params(1.0))
        pred = predict_exact(post, np.array([[0.0]]))
        np.testing.assert_allclose(pred.mean, [0.5], rtol=1e-12)
        np.testing.assert_allclose(pred.cov, [[0.5]], rtol=1e-12)

    def test_prior_reversion_far_away(self, rng, params_1d):
        X = rng.uniform(-1, 1, size=(10, 1))
        y = rng.standard_normal(10)
        post = fit_exact(X, y, params_1d)
        pred = predict_exact(post, np.array([[60.0]]))
        assert abs(pred.mean[0]) < 1e-10
        np.testing.assert_allclose(pred.cov[0, 0], params_1d.signal_variance, rtol=1e-10)

    def test_against_dense_inversion(self, rng, params_2d):
        X = rng.uniform(-2, 2, size=(3, 2))
        y = rng.standard_normal(3)
        Xs = rng.uniform(-2, 2, size=(4, 2))
        post = fit_exact(X, y, params_2d)
        pred = predict_exact(post, Xs)
        Kn = kernel_matrix(X, None, params_2d) + params_2d.noise_variance * np.eye(3)
        Ks = kernel_matrix(Xs, X, params_2d)
        inv = np.linalg.inv(Kn)
        np.testing.assert_allclose(pred.mean, Ks @ inv @ y, rtol=1e-10)
        expected_cov = kernel_matrix(Xs, None, params_2d) - Ks @ inv @ Ks.T
        np.testing.assert_allclose(pred.cov, expected_cov, atol=1e-10)

    def test_variance_never_exceeds_prior(self, rng, params_2d):
        X = rng.uniform(-2, 2, size=(25, 2))
        y = rng.standard_normal(25)
        Xs = rng.uniform(-3, 3, size=(40, 2))
        pred = predict_exact(fit_exact(X, y, params_2d), Xs)
        assert np.all(np.diag(pred.cov) <= kernel_diag(Xs, params_2d) + 1e-10)

    def test_interpolation_small_noise(self, rng):
        # well-separated points: spacing ~2.4 lengthscales keeps k_XX full rank
        p = KernelParams(np.array([0.15]), 1.0, 1e-8)
        X = np.linspace(-2, 2, 12)[:, None]
        y = rng.standard_normal(12)
        pred = predict_exact(fit_exact(X, y, p), X)
        assert np.linalg.norm(pred.mean - y) < 1e-3 * np.linalg.norm(y)

    def test_shrinkage_monotone_in_noise(self, rng):
        X = np.linspace(-2, 2, 10)[:, None]
        y = rng.standard_normal(10)
        norms = []
        for s2 in (0.1, 1.0, 10.0):
            p = KernelParams(np.array([1.0]), 1.0, s2)
            pred = predict_exact(fit_exact(X, y, p), X)
            norms.append(np.linalg.norm(pred.mean))
        assert norms[0] > norms[1] > norms[2]


class TestLogMarginalLikelihood:
    def test_single_zero_observation(self):
        # y=0, k(0,0)=1, s2=1: log N(0 | 0, 2)
        lml = log_marginal_likelihood(np.array([[0.0]]), np.array([0.0]), _unit_params(1.0))
        assert lml == pytest.approx(-0.5 * np.log(2 * np.pi * 2.0), abs=1e-10)
        assert lml == pytest.approx(-1.26551, abs=1e-5)

    def test_independence_limit_small_lengthscale(self, rng):
        # lengthscale -> 0 makes the latents independent: sum of 1-d densities
        p = KernelParams(np.array([1e-8]), 1.3, 0.4)
        X = np.arange(6, dtype=float)[:, None]
        y = rng.standard_normal(6)
        var = p.signal_variance + p.noise_variance
        expected = np.sum(-0.5 * (np.log(2 * np.pi * var) + y**2 / var))
        assert log_marginal_likelihood(X, y, p) == pytest.approx(expected, rel=1e-10)

    def test_zero_target_maximizes_over_scalings(self, rng, params_2d):
        X = rng.uniform(-2, 2, size=(8, 2))
        y = rng.standard_normal(8)
        base = log_marginal_likelihood(X, np.zeros(8), params_2d)
        for scale in (0.5, 1.0, 2.0):
            assert log_marginal_likelihood(X, scale * y, params_2d) <= base
