"""Exact GP regression posterior and log marginal likelihood.

The exact posterior is the ground truth every sparse method is scored
against, so it is kept even at the largest desk-scale training sets
(O(N^3) once per experiment).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .kernels import KernelParams, as_inputs, kernel_matrix
from .linalg import CholFactor, chol_psd, solve_lower, solve_psd

__all__ = ["ExactPosterior", "GaussianPosterior", "fit_exact", "predict_exact",
           "log_marginal_likelihood"]

# Refuse O(N^3) fits above this unless the caller raises the guard explicitly.
DEFAULT_N_CAP = 20000


@dataclass(frozen=True)
class GaussianPosterior:
    """Finite-dimensional Gaussian predictive state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"cov shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def var(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


@dataclass(frozen=True)
class ExactPosterior:
    """Factorized exact posterior: alpha = (k_XX + sigma^2 I)^{-1} y."""

    train_inputs: np.ndarray
    alpha: np.ndarray
    chol: CholFactor
    params: KernelParams


def _noisy_gram(X: np.ndarray, params: KernelParams) -> np.ndarray:
    K = kernel_matrix(X, None, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    return K


def fit_exact(X: np.ndarray, y: np.ndarray, params: KernelParams,
              n_cap: int = DEFAULT_N_CAP) -> ExactPosterior:
    """Fit the exact GP regression posterior.

    Stores the Cholesky factor of k_XX + sigma^2 I and alpha; O(N^3) time,
    O(N^2) memory.
    """
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionMismatchError(f"len(y)={y.size} but X has {X.shape[0]} rows")
    if X.shape[0] > n_cap:
        raise ValueError(f"N={X.shape[0]} exceeds the exact-GP guard ({n_cap})")
    factor = chol_psd(_noisy_gram(X, params))
    alpha = solve_psd(factor, y)
    return ExactPosterior(X, alpha, factor, params)


def predict_exact(post: ExactPosterior, Xstar: np.ndarray) -> GaussianPosterior:
    """Posterior mean and covariance at query locations.

    mean = k_{*X} alpha
    cov  = k_{**} - k_{*X} (k_XX + sigma^2 I)^{-1} k_{X*}
    """
    Xstar = as_inputs(Xstar, post.params.dim)
    Kxs = kernel_matrix(post.train_inputs, Xstar, post.params)
    mean = Kxs.T @ post.alpha
    V = solve_lower(post.chol, Kxs)
    cov = kernel_matrix(Xstar, None, post.params) - V.T @ V
    cov = (cov + cov.T) / 2.0
    return GaussianPosterior(mean, cov)


def log_marginal_likelihood(X: np.ndarray, y: np.ndarray, params: KernelParams,
                            n_cap: int = DEFAULT_N_CAP) -> float:
    """log N(y | 0, k_XX + sigma^2 I) via Cholesky."""
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionMismatchError(f"len(y)={y.size} but X has {X.shape[0]} rows")
    if X.shape[0] > n_cap:
        raise ValueError(f"N={X.shape[0]} exceeds the exact-GP guard ({n_cap})")
    factor = chol_psd(_noisy_gram(X, params))
    alpha = solve_psd(factor, y)
    n = y.size
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(factor.lower)))
                 - 0.5 * n * np.log(2.0 * np.pi))
