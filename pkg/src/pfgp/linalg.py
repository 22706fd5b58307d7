"""Dense linear algebra for symmetric positive (semi-)definite matrices.

Every factorization in the package funnels through :func:`chol_psd`, which
retries a failed Cholesky with geometrically increasing diagonal jitter.
Kernel matrices built from clustered inputs are routinely singular to
machine precision, so the jitter ladder is load-bearing, not cosmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, eigh, solve_triangular

from .errors import DimensionMismatchError, JitterCapExceededError, NotSymmetricError

__all__ = [
    "CholFactor",
    "JitterPolicy",
    "chol_psd",
    "solve_psd",
    "trace_product",
    "sqrtm_psd",
]


@dataclass(frozen=True)
class JitterPolicy:
    """Jitter ladder: ``initial * growth**k`` times mean(diag), up to ``cap``."""

    initial: float = 1e-10
    growth: float = 10.0
    cap: float = 1e-4

    def rungs(self, diag_scale: float):
        level = self.initial
        while level <= self.cap * (1.0 + 1e-12):
            yield level * diag_scale
            level *= self.growth


DEFAULT_JITTER = JitterPolicy()


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular factor with the jitter that made it succeed.

    Satisfies ``lower @ lower.T == A + jitter_used * I``.
    """

    lower: np.ndarray
    jitter_used: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        """log det(A + jitter_used*I)."""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def _check_symmetric(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {A.shape}")
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if scale > 0 and float(np.max(np.abs(A - A.T))) > tol * max(scale, 1.0):
        raise NotSymmetricError("matrix is not symmetric within tolerance")
    return A


def chol_psd(A: np.ndarray, policy: JitterPolicy = DEFAULT_JITTER) -> CholFactor:
    """Cholesky factorization with automatic diagonal jitter.

    Parameters
    ----------
    A : ndarray, shape (n, n)
        Symmetric positive (semi-)definite matrix.
    policy : JitterPolicy
        Ladder of jitter levels, relative to mean(diag(A)), tried after a
        plain factorization fails.

    Returns
    -------
    CholFactor
        ``lower @ lower.T = A + jitter_used * I`` with ``jitter_used == 0``
        when the plain factorization succeeds.

    Raises
    ------
    NotSymmetricError
        If A is not symmetric.
    JitterCapExceededError
        If the matrix stays indefinite at the largest jitter level.
    """
    A = _check_symmetric(A)
    try:
        return CholFactor(cholesky(A, lower=True), 0.0)
    except LinAlgError:
        pass
    diag_scale = float(np.mean(np.diag(A)))
    if diag_scale <= 0.0 or not np.isfinite(diag_scale):
        diag_scale = 1.0
    eye = np.eye(A.shape[0])
    for jitter in policy.rungs(diag_scale):
        try:
            return CholFactor(cholesky(A + jitter * eye, lower=True), jitter)
        except LinAlgError:
            continue
    raise JitterCapExceededError(
        f"Cholesky failed up to jitter {policy.cap:g}*mean(diag); "
        "matrix is too indefinite (bad hyperparameters or duplicated inputs?)"
    )


def solve_psd(factor: CholFactor, B: np.ndarray) -> np.ndarray:
    """Solve (A + jitter*I) X = B from a precomputed factor."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != factor.n:
        raise DimensionMismatchError(
            f"rhs has {B.shape[0]} rows, factor is {factor.n}x{factor.n}"
        )
    return cho_solve((factor.lower, True), B)


def solve_lower(factor: CholFactor, B: np.ndarray) -> np.ndarray:
    """Solve L X = B for the lower-triangular factor L."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != factor.n:
        raise DimensionMismatchError(
            f"rhs has {B.shape[0]} rows, factor is {factor.n}x{factor.n}"
        )
    return solve_triangular(factor.lower, B, lower=True)


def inverse_psd(factor: CholFactor) -> np.ndarray:
    """Explicit (A + jitter*I)^{-1}; only for small matrices (M x M blocks)."""
    return cho_solve((factor.lower, True), np.eye(factor.n))


def trace_product(A: np.ndarray, B: np.ndarray) -> float:
    """tr(A @ B) without forming the product.

    A is (n, m), B is (m, n); returns sum(A * B.T).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0] or A.shape[0] != B.shape[1]:
        raise DimensionMismatchError(
            f"trace_product needs (n,m) and (m,n), got {A.shape} and {B.shape}"
        )
    return float(np.sum(A * B.T))


def sqrtm_psd(A: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues (round-off) are clamped to zero. Robustness wins
    over speed here: the matrices are test-set sized.
    """
    A = _check_symmetric(A, tol=1e-10)
    w, V = eigh((A + A.T) / 2.0)
    w = np.clip(w, 0.0, None)
    S = (V * np.sqrt(w)) @ V.T
    return (S + S.T) / 2.0
