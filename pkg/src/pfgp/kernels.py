"""Squared-exponential ARD kernel and cross-covariance assembly.

Only SE-ARD ships; the function surface (matrix / diag / position gradient)
is the boundary a Matern variant would slot into.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError

__all__ = ["KernelParams", "as_inputs", "kernel_matrix", "kernel_diag"]


@dataclass(frozen=True)
class KernelParams:
    """SE-ARD hyperparameters plus observation noise.

    lengthscales : (d,) positive, input units
    signal_variance : positive, output units squared
    noise_variance : positive, output units squared
    """

    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or ls.size < 1:
            raise ValueError("lengthscales must be a 1-D vector")
        if not np.all(ls > 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be positive and finite")
        if not (self.signal_variance > 0 and np.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be positive and finite")
        if not (self.noise_variance > 0 and np.isfinite(self.noise_variance)):
            raise ValueError("noise_variance must be positive and finite")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def with_noise(self, noise_variance: float) -> "KernelParams":
        return KernelParams(self.lengthscales, self.signal_variance, noise_variance)


def as_inputs(X: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Validate covariates as a finite (N, d) float array.

    1-D input is promoted to a single column.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionMismatchError(f"inputs must be (N, d) with N,d >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain NaN/Inf")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatchError(f"inputs have d={X.shape[1]}, expected {dim}")
    return X


def kernel_matrix(A: np.ndarray, B: np.ndarray | None, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix k(A, B) for the SE-ARD kernel.

    out[i, j] = signal_variance * exp(-0.5 * sum_k (A[i,k]-B[j,k])^2 / ls[k]^2)

    Pass ``B=None`` (or B is A) for the symmetric case; the result is then
    symmetrized as (K + K^T)/2 with the diagonal pinned exactly.
    """
    A = as_inputs(A, params.dim)
    same = B is None or B is A
    Bv = A if same else as_inputs(B, params.dim)
    if A.shape[1] != Bv.shape[1]:
        raise DimensionMismatchError("input dimensionalities differ")
    As = A / params.lengthscales
    Bs = As if same else Bv / params.lengthscales
    sq = cdist(As, Bs, "sqeuclidean")
    K = params.signal_variance * np.exp(-0.5 * sq)
    if same:
        K = (K + K.T) / 2.0
        np.fill_diagonal(K, params.signal_variance)
    return K


def kernel_diag(A: np.ndarray, params: KernelParams) -> np.ndarray:
    """k(x_i, x_i) for each row; constant signal_variance for SE-ARD."""
    A = as_inputs(A, params.dim)
    return np.full(A.shape[0], params.signal_variance)


def position_gradient_accumulate(
    G: np.ndarray,
    K: np.ndarray,
    A: np.ndarray,
    B: np.ndarray,
    params: KernelParams,
) -> np.ndarray:
    """Accumulate d<G, k(A, B)>/dA for the SE-ARD kernel.

    G and K are (m, n) with K = k(A, B); returns the (m, d) array
    sum_n (G*K)[i, n] * (B[n] - A[i]) / lengthscales^2. When A is B the
    caller must pass the symmetrized adjoint G + G^T (diagonal entries
    contribute nothing since B[n] - A[i] vanishes there).
    """
    W = G * K
    ls2 = params.lengthscales**2
    out = (W @ B - W.sum(axis=1)[:, None] * A) / ls2
    return out
