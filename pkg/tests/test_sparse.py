import tracemalloc

import numpy as np
import pytest

from pfgp.exact import fit_exact, kernel_matrix, log_marginal_likelihood, predict_exact
from pfgp.kernels import KernelParams, kernel_diag
from pfgp.sparse import (
    build_nystrom,
    dtc_predict,
    fit_hyperparams_pilot,
    sor_predict,
    subsample_predict,
    validate_inducing,
    vfe_elbo,
)


def make_instance(rng, n=20, d=1, noise=0.25):
    X = rng.uniform(-3, 3, size=(n, d))
    y = rng.standard_normal(n)
    p = KernelParams(np.full(d, 0.8), 1.0, noise)
    return X, y, p


class TestBuildNystrom:
    def test_exact_when_inducing_equals_data(self, rng):
        X, y, p = make_instance(rng, n=15)
        cache = build_nystrom(X, X, p)
        Q = cache.Qbar @ cache.K_XM.T
        np.testing.assert_allclose(Q, kernel_matrix(X, None, p), atol=1e-6)

    def test_rank_one_scalar_formula(self, rng):
        X, y, p = make_instance(rng, n=10)
        z = X[[3]]
        cache = build_nystrom(X, z, p)
        Q = cache.Qbar @ cache.K_XM.T
        kxz = kernel_matrix(X, z, p).ravel()
        expected = np.outer(kxz, kxz) / p.signal_variance
        np.testing.assert_allclose(Q, expected, rtol=1e-8)

    def test_nystrom_underestimates_diagonal(self, rng):
        X, y, p = make_instance(rng, n=20)
        cache = build_nystrom(X, X[rng.choice(20, 5, replace=False)], p)
        Q = cache.Qbar @ cache.K_XM.T
        gap = np.trace(kernel_matrix(X, None, p) - Q)
        assert gap >= -1e-8

    def test_qbar_reproduces_cross_matrix(self, rng):
        X, y, p = make_instance(rng, n=30, d=2)
        cache = build_nystrom(X, X[:6], p)
        recon = cache.Qbar @ cache.K_MM
        rel = np.linalg.norm(recon - cache.K_XM) / np.linalg.norm(cache.K_XM)
        assert rel < 1e-8

    def test_warns_when_m_exceeds_n(self, rng):
        X, y, p = make_instance(rng, n=3)
        Z = rng.uniform(-3, 3, size=(5, 1))
        with pytest.warns(UserWarning):
            build_nystrom(X, Z, p)

    def test_duplicate_inducing_rejected(self, rng):
        X, y, p = make_instance(rng, n=5)
        Z = np.vstack([X[0], X[0]])
        with pytest.raises(ValueError):
            validate_inducing(Z, p)


class TestDtcPredict:
    def test_matches_exact_at_full_inducing(self, rng):
        X, y, p = make_instance(rng, n=15)
        Xs = rng.uniform(-3, 3, size=(8, 1))
        cache = build_nystrom(X, X, p)
        dtc = dtc_predict(cache, X, y, Xs, p)
        exact = predict_exact(fit_exact(X, y, p), Xs)
        np.testing.assert_allclose(dtc.mean, exact.mean, atol=1e-6)
        np.testing.assert_allclose(dtc.cov, exact.cov, atol=1e-6)

    def test_zero_targets_zero_mean(self, rng):
        X, y, p = make_instance(rng, n=10)
        cache = build_nystrom(X, X[[0]], p)
        pred = dtc_predict(cache, X, np.zeros(10), rng.uniform(-3, 3, size=(5, 1)), p)
        np.testing.assert_array_equal(pred.mean, np.zeros(5))

    def test_single_datum_closed_form(self):
        # one observation t=1 at x=0 with unit kernel and noise 1:
        # posterior mean 1/2 and variance 1/2 at the origin
        p = KernelParams(np.array([1.0]), 1.0, 1.0)
        X = np.array([[0.0]])
        cache = build_nystrom(X, X, p)
        pred = dtc_predict(cache, X, np.array([1.0]), X, p)
        np.testing.assert_allclose(pred.mean, [0.5], rtol=1e-10)
        np.testing.assert_allclose(pred.cov, [[0.5]], rtol=1e-10)

    def test_variance_between_sor_and_prior(self, rng):
        X, y, p = make_instance(rng, n=25)
        Xs = rng.uniform(-3, 3, size=(12, 1))
        cache = build_nystrom(X, X[rng.choice(25, 6, replace=False)], p)
        dtc = dtc_predict(cache, X, y, Xs, p)
        sor = sor_predict(cache, X, y, Xs, p)
        assert np.all(dtc.var >= sor.var - 1e-10)
        assert np.all(dtc.var <= kernel_diag(Xs, p) + 1e-10)


class TestSorPredict:
    def test_mean_identical_to_dtc(self, rng):
        X, y, p = make_instance(rng, n=25, d=2)
        Xs = rng.uniform(-3, 3, size=(10, 2))
        cache = build_nystrom(X, X[:7], p)
        np.testing.assert_allclose(sor_predict(cache, X, y, Xs, p).mean,
                                   dtc_predict(cache, X, y, Xs, p).mean, atol=1e-12)

    def test_variance_below_dtc(self, rng):
        X, y, p = make_instance(rng, n=25)
        Xs = rng.uniform(-3, 3, size=(10, 1))
        cache = build_nystrom(X, X[:5], p)
        assert np.all(sor_predict(cache, X, y, Xs, p).var
                      <= dtc_predict(cache, X, y, Xs, p).var + 1e-10)

    def test_matches_exact_cov_at_training_points(self, rng):
        # the compression is exact at the training locations themselves
        X, y, p = make_instance(rng, n=12)
        cache = build_nystrom(X, X, p)
        sor = sor_predict(cache, X, y, X, p)
        exact = predict_exact(fit_exact(X, y, p), X)
        np.testing.assert_allclose(sor.cov, exact.cov, atol=1e-6)


class TestSubsamplePredict:
    def test_full_subset_equals_exact(self, rng):
        X, y, p = make_instance(rng, n=12)
        Xs = rng.uniform(-3, 3, size=(6, 1))
        pred = subsample_predict(X, y, np.arange(12), Xs, p)
        exact = predict_exact(fit_exact(X, y, p), Xs)
        np.testing.assert_allclose(pred.mean, exact.mean, atol=1e-10)
        np.testing.assert_allclose(pred.cov, exact.cov, atol=1e-10)

    def test_singleton_subset(self, rng):
        p = KernelParams(np.array([1.0]), 1.0, 1.0)
        X = np.array([[0.0], [2.0]])
        y = np.array([1.0, -1.0])
        pred = subsample_predict(X, y, [0], np.array([[0.0]]), p)
        np.testing.assert_allclose(pred.mean, [0.5], rtol=1e-10)
        np.testing.assert_allclose(pred.cov, [[0.5]], rtol=1e-10)

    def test_empty_subset_raises(self, rng):
        X, y, p = make_instance(rng, n=5)
        with pytest.raises(ValueError):
            subsample_predict(X, y, [], X, p)

    def test_out_of_range_raises(self, rng):
        X, y, p = make_instance(rng, n=5)
        with pytest.raises(IndexError):
            subsample_predict(X, y, [7], X, p)


class TestVfeElbo:
    def test_equals_lml_at_full_inducing(self, rng):
        X, y, p = make_instance(rng, n=15)
        assert vfe_elbo(X, y, X, p) == pytest.approx(
            log_marginal_likelihood(X, y, p), abs=1e-6)

    def test_lower_bounds_lml(self, rng):
        X, y, p = make_instance(rng, n=25, d=2)
        lml = log_marginal_likelihood(X, y, p)
        for m in (1, 3, 10):
            Z = X[rng.choice(25, m, replace=False)]
            assert vfe_elbo(X, y, Z, p) <= lml + 1e-6

    def test_dense_oracle_m1(self, rng):
        X, y, p = make_instance(rng, n=5)
        Z = X[[2]]
        K = kernel_matrix(X, None, p)
        C = kernel_matrix(X, Z, p)
        T = kernel_matrix(Z, None, p)
        Q = C @ np.linalg.solve(T, C.T)
        Qs = Q + p.noise_variance * np.eye(5)
        dense = (-0.5 * (5 * np.log(2 * np.pi) + np.linalg.slogdet(Qs)[1]
                         + y @ np.linalg.solve(Qs, y))
                 - np.trace(K - Q) / (2 * p.noise_variance))
        assert vfe_elbo(X, y, Z, p) == pytest.approx(dense, rel=1e-10)

    def test_permutation_invariant(self, rng):
        X, y, p = make_instance(rng, n=20)
        Z = X[rng.choice(20, 6, replace=False)]
        perm = rng.permutation(6)
        assert vfe_elbo(X, y, Z, p) == pytest.approx(vfe_elbo(X, y, Z[perm], p),
                                                     rel=1e-12)


class TestFitHyperparamsPilot:
    def test_recovers_lengthscale_scale(self):
        # data generated from known params; the fitted lengthscale should land
        # within x2 of the truth (median over seeds)
        true = KernelParams(np.array([0.5]), 1.0, 0.05)
        ratios = []
        for seed in range(5):
            rng = np.random.default_rng(seed)
            X = rng.uniform(-3, 3, size=(500, 1))
            K = kernel_matrix(X, None, true)
            from pfgp.linalg import chol_psd
            f = chol_psd(K).lower @ rng.standard_normal(500)
            y = f + np.sqrt(true.noise_variance) * rng.standard_normal(500)
            fitted = fit_hyperparams_pilot(X, y, m_pilot=64, seed=seed, max_evals=250)
            ratios.append(fitted.lengthscales[0] / true.lengthscales[0])
        med = np.median(ratios)
        assert 0.5 <= med <= 2.0

    def test_elbo_never_worse_than_init(self, rng):
        X, y, p0 = make_instance(rng, n=120)
        rng2 = np.random.default_rng(3)
        idx = rng2.choice(120, 32, replace=False)
        fitted = fit_hyperparams_pilot(X, y, m_pilot=32, seed=3, max_evals=120, init=p0)
        assert vfe_elbo(X, y, X[idx], fitted) >= vfe_elbo(X, y, X[idx], p0) - 1e-9

    def test_noise_floor_clamped(self, rng):
        X = np.linspace(-3, 3, 60)[:, None]
        y = np.sin(X[:, 0])  # almost noiseless
        fitted = fit_hyperparams_pilot(X, y, m_pilot=20, seed=0, max_evals=150)
        assert fitted.noise_variance >= 1e-6 * np.var(y) - 1e-15

    def test_m_pilot_guard(self, rng):
        X, y, p = make_instance(rng, n=10)
        with pytest.raises(ValueError):
            fit_hyperparams_pilot(X, y, m_pilot=11, seed=0)


class TestMemoryDiscipline:
    def test_no_dense_train_gram(self):
        # N=2000, M=10: nothing in the sparse module may allocate an N x N
        # buffer (32 MB); peak extra memory must stay within c * N * M floats.
        rng = np.random.default_rng(0)
        n, m = 2000, 10
        X = rng.uniform(-3, 3, size=(n, 2))
        y = rng.standard_normal(n)
        p = KernelParams(np.array([0.8, 0.8]), 1.0, 0.1)
        Z = X[rng.choice(n, m, replace=False)]
        Xs = rng.uniform(-3, 3, size=(50, 2))
        build_nystrom(X, Z, p)  # warm any lazy imports before measuring
        tracemalloc.start()
        tracemalloc.reset_peak()
        cache = build_nystrom(X, Z, p)
        vfe_elbo(X, y, Z, p, cache=cache)
        dtc_predict(cache, X, y, Xs, p)
        sor_predict(cache, X, y, Xs, p)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        cap = 40 * n * m * 8  # ~6.4 MB; an N x N buffer alone is 32 MB
        assert peak < cap, f"peak {peak} exceeds cap {cap}"
