"""Inducing-point machinery shared by the sparse methods.

Everything is built on one Nystrom cache per inducing set:

    Qbar        = k_XI k_II^{-1}                      (N x M)
    Sigma_tilde = (k_II + sigma^{-2} k_IX k_XI)^{-1}  (M x M, as a Cholesky)

DTC predictive: mean = sigma^{-2} k_*I Sigma_tilde k_IX y,
cov = k_** - Q_** + k_*I Sigma_tilde k_I*. SoR drops the k - Q correction.
No operation here allocates an N x N buffer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatchError, OptimizerDivergedError, PfgpError
from .exact import GaussianPosterior, fit_exact, predict_exact
from .kernels import KernelParams, as_inputs, kernel_matrix, position_gradient_accumulate
from .linalg import CholFactor, chol_psd, inverse_psd, solve_psd, trace_product

__all__ = [
    "InducingSet",
    "NystromCache",
    "build_nystrom",
    "dtc_predict",
    "sor_predict",
    "subsample_predict",
    "vfe_elbo",
    "vfe_elbo_gradient",
    "fit_hyperparams_pilot",
]

# Scaled-coordinate distance below which inducing rows count as duplicates.
DUPLICATE_TOL = 1e-8


def validate_inducing(points: np.ndarray, params: KernelParams | None = None) -> np.ndarray:
    """Validate an M x d inducing-point matrix; rejects near-duplicate rows."""
    Z = as_inputs(points, params.dim if params is not None else None)
    if params is not None and Z.shape[0] > 1:
        S = Z / params.lengthscales
        # pairwise min distance in scaled coordinates; M is small
        diff = S[:, None, :] - S[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        np.fill_diagonal(d2, np.inf)
        if np.min(d2) < DUPLICATE_TOL**2:
            raise ValueError("inducing set contains (near-)duplicate rows")
    return Z


@dataclass(frozen=True)
class InducingSet:
    """Inducing-point locations; the optimization variable."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", as_inputs(self.points))

    @property
    def m(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NystromCache:
    """Per-inducing-set matrices reused by DTC, SoR, VFE and the divergence objective."""

    inducing: np.ndarray          # M x d
    K_XM: np.ndarray              # N x M cross matrix k(X, I)
    K_MM: np.ndarray              # M x M gram k(I, I)
    chol_MM: CholFactor
    Qbar: np.ndarray              # N x M, k_XI k_II^{-1}
    Sigma_tilde: CholFactor       # chol of k_II + sigma^{-2} k_IX k_XI

    @property
    def n(self) -> int:
        return self.K_XM.shape[0]

    @property
    def m(self) -> int:
        return self.K_XM.shape[1]

    def sigma_tilde_solve(self, B: np.ndarray) -> np.ndarray:
        return solve_psd(self.Sigma_tilde, B)

    def sigma_tilde_inv(self) -> np.ndarray:
        """Explicit Sigma_tilde as an M x M matrix."""
        return inverse_psd(self.Sigma_tilde)


def build_nystrom(X: np.ndarray, inducing: np.ndarray, params: KernelParams) -> NystromCache:
    """Assemble the Nystrom cache in O(N M^2) time and O(N M) space."""
    X = as_inputs(X, params.dim)
    Z = as_inputs(inducing, params.dim)
    if Z.shape[0] > X.shape[0]:
        warnings.warn("more inducing points than data (M > N)", stacklevel=2)
    K_XM = kernel_matrix(X, Z, params)
    K_MM = kernel_matrix(Z, None, params)
    chol_MM = chol_psd(K_MM)
    Qbar = solve_psd(chol_MM, K_XM.T).T
    inner = K_MM + (K_XM.T @ K_XM) / params.noise_variance
    Sigma_tilde = chol_psd((inner + inner.T) / 2.0)
    return NystromCache(Z, K_XM, K_MM, chol_MM, Qbar, Sigma_tilde)


def _check_xy(cache: NystromCache, X: np.ndarray, y: np.ndarray, params: KernelParams):
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != cache.n or y.size != cache.n:
        raise DimensionMismatchError("cache was built from data of a different size")
    return X, y


def dtc_predict(cache: NystromCache, X: np.ndarray, y: np.ndarray,
                Xstar: np.ndarray, params: KernelParams) -> GaussianPosterior:
    """Deterministic-training-conditional predictive posterior."""
    X, y = _check_xy(cache, X, y, params)
    Xstar = as_inputs(Xstar, params.dim)
    K_sM = kernel_matrix(Xstar, cache.inducing, params)
    proj = cache.sigma_tilde_solve(cache.K_XM.T @ y) / params.noise_variance
    mean = K_sM @ proj
    Qss = K_sM @ solve_psd(cache.chol_MM, K_sM.T)
    corr = K_sM @ cache.sigma_tilde_solve(K_sM.T)
    cov = kernel_matrix(Xstar, None, params) - Qss + corr
    cov = (cov + cov.T) / 2.0
    return GaussianPosterior(mean, cov)


def sor_predict(cache: NystromCache, X: np.ndarray, y: np.ndarray,
                Xstar: np.ndarray, params: KernelParams) -> GaussianPosterior:
    """Subset-of-regressors predictive posterior (same mean as DTC)."""
    X, y = _check_xy(cache, X, y, params)
    Xstar = as_inputs(Xstar, params.dim)
    K_sM = kernel_matrix(Xstar, cache.inducing, params)
    proj = cache.sigma_tilde_solve(cache.K_XM.T @ y) / params.noise_variance
    mean = K_sM @ proj
    cov = K_sM @ cache.sigma_tilde_solve(K_sM.T)
    cov = (cov + cov.T) / 2.0
    return GaussianPosterior(mean, cov)


def subsample_predict(X: np.ndarray, y: np.ndarray, subset_indices,
                      Xstar: np.ndarray, params: KernelParams) -> GaussianPosterior:
    """Exact GP fit on a data subset (the 'subsample' baseline)."""
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    idx = np.asarray(subset_indices, dtype=int)
    if idx.size == 0:
        raise ValueError("subset must be non-empty")
    if np.unique(idx).size != idx.size:
        raise ValueError("subset indices must be distinct")
    if idx.min() < 0 or idx.max() >= X.shape[0]:
        raise IndexError("subset index out of range")
    post = fit_exact(X[idx], y[idx], params)
    return predict_exact(post, Xstar)


def vfe_elbo(X: np.ndarray, y: np.ndarray, inducing: np.ndarray,
             params: KernelParams, cache: NystromCache | None = None) -> float:
    """Variational free-energy bound on the log marginal likelihood.

    log N(y | 0, Q_XX + sigma^2 I) - tr(k_XX - Q_XX) / (2 sigma^2),
    evaluated through the cache in O(N M^2): the determinant-lemma and
    Woodbury identities replace every N x N inverse.
    """
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if cache is None:
        cache = build_nystrom(X, inducing, params)
    n = cache.n
    s2 = params.noise_variance
    r = cache.K_XM.T @ y
    # det(Q + s2 I) = s2^n det(Sigma_tilde^{-1}) / det(k_II)  (determinant lemma)
    logdet_q = n * np.log(s2) + cache.Sigma_tilde.logdet() - cache.chol_MM.logdet()
    quad = (y @ y) / s2 - (r @ cache.sigma_tilde_solve(r)) / s2**2
    lognorm = -0.5 * (n * np.log(2.0 * np.pi) + logdet_q + quad)
    trace_gap = n * params.signal_variance - float(np.sum(cache.Qbar * cache.K_XM))
    return float(lognorm - trace_gap / (2.0 * s2))


def vfe_elbo_gradient(X: np.ndarray, y: np.ndarray, inducing: np.ndarray,
                      params: KernelParams, cache: NystromCache | None = None) -> np.ndarray:
    """Gradient of the ELBO with respect to the inducing locations.

    Reverse-mode accumulation through C = k_XI and T = k_II; matches
    central finite differences (see tests).
    """
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    Z = as_inputs(inducing, params.dim)
    if cache is None:
        cache = build_nystrom(X, Z, params)
    s2 = params.noise_variance
    C = cache.K_XM
    T = cache.K_MM
    E = cache.sigma_tilde_inv()
    Ti = inverse_psd(cache.chol_MM)
    G = C.T @ C
    r = C.T @ y
    Er = E @ r

    GT = -0.5 * E + 0.5 * Ti - 0.5 * np.outer(Er, Er) / s2**2 \
        - 0.5 * (Ti @ G @ Ti) / s2
    GG = -0.5 * E / s2 - 0.5 * np.outer(Er, Er) / s2**3 + 0.5 * Ti / s2
    GC = np.outer(y, Er) / s2**2 + 2.0 * C @ GG

    grad = position_gradient_accumulate(GC.T, C.T, Z, X, params)
    grad += position_gradient_accumulate(GT + GT.T, T, Z, Z, params)
    return grad


def _finite_or_raise(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise OptimizerDivergedError(f"{what} is non-finite")
    return value


def fit_hyperparams_pilot(X: np.ndarray, y: np.ndarray, m_pilot: int, seed: int,
                          max_evals: int = 400,
                          init: KernelParams | None = None) -> KernelParams:
    """Fit kernel hyperparameters by maximizing the VFE bound.

    Inducing points are frozen at a seeded random subset of the training
    inputs; the search runs over log-lengthscales, log signal variance and
    log noise variance with a gradient-free simplex (one-off cost, not
    performance critical). Noise variance is clamped at 1e-6 * var(y).
    """
    X = as_inputs(X)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if m_pilot > n:
        raise ValueError(f"m_pilot={m_pilot} exceeds N={n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m_pilot, replace=False)
    Z = X[idx]

    var_y = float(np.var(y)) if np.var(y) > 0 else 1.0
    noise_floor = 1e-6 * var_y
    if init is None:
        ls0 = np.maximum(np.std(X, axis=0), 1e-3)
        init = KernelParams(ls0, var_y, 0.1 * var_y)

    def unpack(theta: np.ndarray) -> KernelParams:
        ls = np.exp(theta[:d])
        sv = float(np.exp(theta[d]))
        nv = max(float(np.exp(theta[d + 1])), noise_floor)
        return KernelParams(ls, sv, nv)

    def objective(theta: np.ndarray) -> float:
        try:
            p = unpack(theta)
            value = -vfe_elbo(X, y, Z, p)
        except (PfgpError, ValueError, FloatingPointError):
            return 1e12
        return value if np.isfinite(value) else 1e12

    theta0 = np.concatenate([
        np.log(init.lengthscales),
        [np.log(init.signal_variance)],
        [np.log(max(init.noise_variance, noise_floor))],
    ])
    result = minimize(objective, theta0, method="Nelder-Mead",
                      options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-6})
    best = result.x if objective(result.x) <= objective(theta0) else theta0
    _finite_or_raise(objective(best), "pilot objective")
    return unpack(best)
