"""Divergence objective for DTC inducing-point optimization, plus bound diagnostics.

Scaling convention
------------------
The four-term objective computed here equals sigma^4 times the *squared*
divergence between the DTC approximation and the exact posterior (the two
score fields differ by a 1/sigma^2 factor that is pulled out of the norm).
``pf_dtc_objective_full`` returns that sigma^4-scaled squared quantity;
``pf_divergence_value`` converts it to the W2-comparable divergence
sqrt(value)/sigma^2. The Monte-Carlo estimator in
``eps_importance_estimate`` carries the explicit score factors and is the
independent check of this convention. Optimization is unaffected: the
scaled square is a strictly monotone function of the divergence.

Objective terms (with Q = k_XI k_II^{-1} k_IX, Qbar = k_XI k_II^{-1},
S = k_XI St k_II St k_IX for St = (k_II + sigma^{-2} k_IX k_XI)^{-1},
mu/K-hat the auxiliary mean/covariance, delta = mu_X - y):

    I    tr((Khat_XX + delta delta^T)(k_XX - Q_XX))
    IIa  tr(Khat_XX S) + tr(Khat_II Qbar^T S Qbar)
    IIb  -2 tr(Khat_IX S Qbar)
    III  (mu_X - Qbar mu_I)^T S (mu_X - Qbar mu_I)

The fast path drops the inducing-independent tr((Khat + delta delta^T) k_XX)
piece of term I and applies S only in the factored form, so it runs in
O(N M^2) time and O(N M) space. The dense oracle uses the equivalent
S = Q (I - (Q + sigma^2 I)^{-1} Q)^2 form instead, so agreement between the
two paths also validates that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AuxKindUnsupportedError,
    DimensionMismatchError,
    ValidationModeRequiredError,
)
from .exact import fit_exact, log_marginal_likelihood, predict_exact
from .kernels import KernelParams, as_inputs, kernel_matrix, position_gradient_accumulate
from .linalg import chol_psd, inverse_psd, solve_psd, trace_product
from .sparse import NystromCache, build_nystrom

__all__ = [
    "AuxiliaryDistribution",
    "PfTerms",
    "PointwiseBounds",
    "ImportanceEstimate",
    "build_aux_subset",
    "build_aux_sor",
    "pf_dtc_objective",
    "pf_dtc_objective_full",
    "pf_dtc_gradient",
    "pf_dtc_value_and_gradient",
    "pf_divergence_value",
    "eps_bound",
    "pointwise_bounds",
    "eps_importance_estimate",
]

DEFAULT_VALIDATION_CAP = 2000
_MATVEC_BLOCK = 512


class AuxiliaryDistribution:
    """Auxiliary GP nu = GP(mu_hat, k_hat) evaluated where the objective needs it.

    kind "subset": exact posterior conditioned on (X_hat, y_hat), so
        mu_hat(x) = k_xA (k_AA + sigma^2 I)^{-1} y_hat
        k_hat(x, x') = k(x, x') - k_xA (k_AA + sigma^2 I)^{-1} k_Ax'.
    Products against k_hat_XX then involve k_XX and cost O(N^2 cols); they
    are gated behind the validation-mode cap.

    kind "sor": low-rank surrogate with the subset as inducing points for
        the full data, k_hat = k_XA Sig_hat k_AX (rank <= M'),
        mu_hat(x) = sigma^{-2} k_xA Sig_hat k_AX y. All products cost
        O(N M' cols) and never materialize N x N.
    """

    def __init__(self, kind, train_X, params, aux_points, aux_y, aux_solve,
                 mix, cross_train, coef_mu, validation_cap):
        self.kind = kind
        self.train_X = train_X
        self.params = params
        self.aux_points = aux_points          # M' x d
        self.aux_y = aux_y                    # subset targets (subset kind)
        self.aux_solve = aux_solve            # CholFactor backing `mix`
        self.mix = mix                        # M' x M' explicit inverse
        self.cross_train = cross_train        # M' x N, k(X_hat, X)
        self.coef_mu = coef_mu                # M' coefficients of mu_hat
        self.validation_cap = validation_cap
        self.mu_X = cross_train.T @ coef_mu   # N-vector mu_hat(X)

    @property
    def n(self) -> int:
        return self.train_X.shape[0]

    @property
    def m_aux(self) -> int:
        return self.aux_points.shape[0]

    def mu_at(self, Z: np.ndarray) -> np.ndarray:
        """mu_hat at arbitrary query points."""
        Z = as_inputs(Z, self.params.dim)
        return kernel_matrix(Z, self.aux_points, self.params) @ self.coef_mu

    def _require_validation(self, what: str):
        if self.n > self.validation_cap:
            raise ValidationModeRequiredError(
                f"{what} with a subset-kind auxiliary needs dense k_XX products; "
                f"N={self.n} exceeds the validation cap {self.validation_cap}"
            )

    def _prior_matvec(self, V: np.ndarray) -> np.ndarray:
        """k_XX @ V in row blocks; O(N^2 cols) time, O(block*N) memory."""
        out = np.empty((self.n, V.shape[1]))
        for start in range(0, self.n, _MATVEC_BLOCK):
            stop = min(start + _MATVEC_BLOCK, self.n)
            Kb = kernel_matrix(self.train_X[start:stop], self.train_X, self.params)
            out[start:stop] = Kb @ V
        return out

    def k_hat_matvec(self, V: np.ndarray) -> np.ndarray:
        """k_hat_XX @ V for V with a small number of columns."""
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if V.shape[0] != self.n:
            raise DimensionMismatchError("matvec operand has wrong leading dimension")
        low_rank = self.cross_train.T @ (self.mix @ (self.cross_train @ V))
        if self.kind == "sor":
            return low_rank
        self._require_validation("k_hat matvec")
        return self._prior_matvec(V) - low_rank

    def k_hat_cross(self, Z: np.ndarray) -> np.ndarray:
        """k_hat(Z, X) as a (len(Z), N) block."""
        Z = as_inputs(Z, self.params.dim)
        K_ZA = kernel_matrix(Z, self.aux_points, self.params)
        low_rank = K_ZA @ (self.mix @ self.cross_train)
        if self.kind == "sor":
            return low_rank
        return kernel_matrix(Z, self.train_X, self.params) - low_rank

    def k_hat_block(self, Z: np.ndarray) -> np.ndarray:
        """k_hat(Z, Z) as a dense symmetric block."""
        Z = as_inputs(Z, self.params.dim)
        K_ZA = kernel_matrix(Z, self.aux_points, self.params)
        low_rank = K_ZA @ self.mix @ K_ZA.T
        if self.kind == "sor":
            B = low_rank
        else:
            B = kernel_matrix(Z, None, self.params) - low_rank
        return (B + B.T) / 2.0

    def k_hat_dense(self) -> np.ndarray:
        """Dense k_hat_XX; validation mode only for either kind."""
        if self.n > self.validation_cap:
            raise ValidationModeRequiredError(
                f"dense k_hat_XX at N={self.n} exceeds the validation cap"
            )
        low_rank = self.cross_train.T @ self.mix @ self.cross_train
        if self.kind == "sor":
            B = low_rank
        else:
            B = kernel_matrix(self.train_X, None, self.params) - low_rank
        return (B + B.T) / 2.0


def _subset_points(X, y, subset_indices, params):
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionMismatchError("len(y) does not match X")
    idx = np.asarray(subset_indices, dtype=int)
    if idx.size < 1:
        raise ValueError("auxiliary subset must be non-empty")
    if np.unique(idx).size != idx.size:
        raise ValueError("auxiliary subset indices must be distinct")
    if idx.min() < 0 or idx.max() >= X.shape[0]:
        raise IndexError("auxiliary subset index out of range")
    return X, y, idx


def build_aux_subset(X, y, subset_indices, params: KernelParams,
                     validation_cap: int = DEFAULT_VALIDATION_CAP) -> AuxiliaryDistribution:
    """Subset-of-data auxiliary: the exact posterior given (X_hat, y_hat)."""
    X, y, idx = _subset_points(X, y, subset_indices, params)
    Xa, ya = X[idx], y[idx]
    A = kernel_matrix(Xa, None, params)
    A[np.diag_indices_from(A)] += params.noise_variance
    factor = chol_psd(A)
    mix = inverse_psd(factor)
    coef = solve_psd(factor, ya)
    cross = kernel_matrix(Xa, X, params)
    return AuxiliaryDistribution("subset", X, params, Xa, ya, factor, mix,
                                 cross, coef, validation_cap)


def build_aux_sor(X, y, subset_indices, params: KernelParams,
                  validation_cap: int = DEFAULT_VALIDATION_CAP) -> AuxiliaryDistribution:
    """Low-rank auxiliary: SoR fit to the full data with the subset as inducing points."""
    X, y, idx = _subset_points(X, y, subset_indices, params)
    Xa = X[idx]
    cross = kernel_matrix(Xa, X, params)
    inner = kernel_matrix(Xa, None, params) + (cross @ cross.T) / params.noise_variance
    factor = chol_psd((inner + inner.T) / 2.0)
    mix = inverse_psd(factor)
    coef = mix @ (cross @ y) / params.noise_variance
    return AuxiliaryDistribution("sor", X, params, Xa, y[idx], factor, mix,
                                 cross, coef, validation_cap)


@dataclass(frozen=True)
class PfTerms:
    """Term-by-term value of the objective; term_I omits the inducing-independent part."""

    term_I: float
    term_IIa: float
    term_IIb: float
    term_III: float

    @property
    def relative_objective(self) -> float:
        return self.term_I + self.term_IIa + self.term_IIb + self.term_III


class _Workspace:
    """Shared intermediates for the fast objective and its gradient.

    Notation: C = k_XI (N x M), T = k_II, E = Sigma_tilde inverse matrix,
    Ti = T^{-1}, G = C^T C, W2 = E T E (so S = C W2 C^T), u/v/w the term-III
    vectors, B1 = Khat_XX C, M1 = C^T B1.
    """

    def __init__(self, cache: NystromCache, y: np.ndarray,
                 aux: AuxiliaryDistribution, params: KernelParams):
        y = np.asarray(y, dtype=float).ravel()
        if y.size != cache.n or aux.n != cache.n:
            raise DimensionMismatchError("cache, targets and auxiliary sizes differ")
        self.cache, self.aux, self.params, self.y = cache, aux, params, y
        self.C = cache.K_XM
        self.T = cache.K_MM
        self.E = cache.sigma_tilde_inv()
        self.Ti = inverse_psd(cache.chol_MM)
        self.G = self.C.T @ self.C
        self.W2 = self.E @ self.T @ self.E
        self.mu_X = aux.mu_X
        self.delta = self.mu_X - y
        self.m_hat = aux.mu_at(cache.inducing)
        self.q = self.C.T @ self.delta
        self.z = self.Ti @ self.m_hat
        self.u = self.mu_X - self.C @ self.z
        self.v = self.C.T @ self.u
        self.B1 = aux.k_hat_matvec(self.C)          # Khat C, N x M
        self.M1 = self.C.T @ self.B1
        self.C_hat_MN = aux.k_hat_cross(cache.inducing)
        self.C_hat_MM = aux.k_hat_block(cache.inducing)
        self.D1 = self.C_hat_MN @ self.C

    def terms(self) -> PfTerms:
        TiG = self.Ti @ self.G
        term_I = -(trace_product(self.M1, self.Ti) + self.q @ self.Ti @ self.q)
        term_IIa = (trace_product(self.M1, self.W2)
                    + trace_product(self.C_hat_MM, TiG @ self.W2 @ TiG.T))
        term_IIb = -2.0 * trace_product(self.D1, self.W2 @ TiG.T)
        term_III = float(self.v @ self.W2 @ self.v)
        return PfTerms(float(term_I), float(term_IIa), float(term_IIb), term_III)

    def gradient(self) -> np.ndarray:
        C, T, E, Ti, G, W2 = self.C, self.T, self.E, self.Ti, self.G, self.W2
        aux, params = self.aux, self.params
        Z = self.cache.inducing
        s2 = params.noise_variance
        w = W2 @ self.v
        Gw = G @ w
        TiG = Ti @ G
        GTi = TiG.T
        TiCTi = Ti @ self.C_hat_MM @ Ti
        Qbar = self.cache.Qbar
        HQbar = self.B1 @ Ti + np.outer(self.delta, Ti @ self.q)
        HC = self.B1 + np.outer(self.delta, self.q)

        # adjoints of the intermediate matrices (reverse-mode by hand)
        GW2 = (self.M1 + GTi @ self.C_hat_MM @ TiG
               - 2.0 * self.D1.T @ TiG + np.outer(self.v, self.v))
        GG = TiCTi @ G @ W2 + W2 @ G @ TiCTi - 2.0 * W2 @ self.D1.T @ Ti
        GTinv = (-(self.M1 + np.outer(self.q, self.q))
                 + self.C_hat_MM @ TiG @ W2 @ G + G @ W2 @ GTi @ self.C_hat_MM
                 - 2.0 * G @ W2 @ self.D1.T
                 - 2.0 * np.outer(Gw, self.m_hat))
        GE = GW2 @ E @ T + T @ E @ GW2
        GT = E @ GW2 @ E - E @ GE @ E - Ti @ GTinv @ Ti
        GC = (-2.0 * HQbar
              + 2.0 * self.B1 @ W2
              + C @ (GG + GG.T)
              - 2.0 * self.C_hat_MN.T @ TiG @ W2
              + 2.0 * np.outer(self.u, w) - 2.0 * np.outer(C @ w, self.z)
              - (C @ E @ (GE + GE.T) @ E) / s2)
        g_m = -2.0 * Ti @ Gw
        G_CMN = -2.0 * TiG @ W2 @ C.T
        G_CMM = TiG @ W2 @ GTi

        # chain into the primitive kernel blocks k(Z, X), k(Z, Z), k(Z, X_hat)
        P_MA = kernel_matrix(Z, aux.aux_points, params)
        G_PMN = GC.T
        G_PMM = GT
        G_PMA = np.outer(g_m, aux.coef_mu)
        sym_CMM = G_CMM + G_CMM.T
        if aux.kind == "subset":
            G_PMN = G_PMN + G_CMN
            G_PMM = G_PMM + G_CMM
            G_PMA -= G_CMN @ (aux.mix @ aux.cross_train).T
            G_PMA -= sym_CMM @ P_MA @ aux.mix
        else:
            G_PMA += G_CMN @ (aux.mix @ aux.cross_train).T
            G_PMA += sym_CMM @ P_MA @ aux.mix

        grad = position_gradient_accumulate(G_PMN, C.T, Z, aux.train_X, params)
        grad += position_gradient_accumulate(G_PMA, P_MA, Z, aux.aux_points, params)
        grad += position_gradient_accumulate(G_PMM + G_PMM.T, T, Z, Z, params)
        return grad


def pf_dtc_objective(cache: NystromCache, y: np.ndarray,
                     aux: AuxiliaryDistribution, params: KernelParams) -> PfTerms:
    """Inducing-dependent part of the objective in O(N M^2).

    term_I here is the -tr((Khat + delta delta^T) Q_XX) piece only; the
    k_XX part is a constant in the inducing points and is never computed.
    """
    return _Workspace(cache, y, aux, params).terms()


def pf_dtc_gradient(cache: NystromCache, y: np.ndarray,
                    aux: AuxiliaryDistribution, params: KernelParams) -> np.ndarray:
    """Gradient of the relative objective with respect to inducing locations."""
    return _Workspace(cache, y, aux, params).gradient()


def pf_dtc_value_and_gradient(cache: NystromCache, y: np.ndarray,
                              aux: AuxiliaryDistribution, params: KernelParams):
    """(relative objective, gradient) sharing one set of intermediates."""
    ws = _Workspace(cache, y, aux, params)
    return ws.terms().relative_objective, ws.gradient()


def pf_dtc_objective_full(X: np.ndarray, y: np.ndarray, inducing: np.ndarray,
                          aux: AuxiliaryDistribution, params: KernelParams,
                          validation_cap: int = DEFAULT_VALIDATION_CAP) -> float:
    """Complete sigma^4-scaled squared divergence, dense O(N^2 M) oracle.

    Includes the inducing-independent terms dropped by the fast path, and
    deliberately applies S through the resolvent form
    Q (I - (Q + sigma^2 I)^{-1} Q)^2 rather than the factored form, so the
    two code paths are independent checks of each other.
    """
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] > validation_cap:
        raise ValidationModeRequiredError(
            f"dense objective at N={X.shape[0]} exceeds the validation cap {validation_cap}"
        )
    Z = as_inputs(inducing, params.dim)
    s2 = params.noise_variance
    K = kernel_matrix(X, None, params)
    Khat = aux.k_hat_dense()
    C = kernel_matrix(X, Z, params)
    T = kernel_matrix(Z, None, params)
    chol_T = chol_psd(T)
    Qbar = solve_psd(chol_T, C.T).T
    Q = Qbar @ C.T
    Q = (Q + Q.T) / 2.0
    Qs = Q + s2 * np.eye(Q.shape[0])
    resolvent = solve_psd(chol_psd(Qs), Q)
    shrink = np.eye(Q.shape[0]) - resolvent
    S = Q @ shrink @ shrink
    S = (S + S.T) / 2.0

    delta = aux.mu_X - y
    H = Khat + np.outer(delta, delta)
    u = aux.mu_X - Qbar @ aux.mu_at(Z)
    C_hat_MN = aux.k_hat_cross(Z)
    C_hat_MM = aux.k_hat_block(Z)

    term_I = trace_product(H, K - Q)
    term_IIa = trace_product(Khat, S) + trace_product(C_hat_MM, Qbar.T @ S @ Qbar)
    term_IIb = -2.0 * trace_product(C_hat_MN, S @ Qbar)
    term_III = float(u @ S @ u)
    return float(term_I + term_IIa + term_IIb + term_III)


def pf_divergence_value(scaled_objective: float, params: KernelParams) -> float:
    """Convert the sigma^4-scaled squared objective to the divergence itself."""
    return float(np.sqrt(max(scaled_objective, 0.0)) / params.noise_variance)


def eps_bound(X: np.ndarray, y: np.ndarray, aux: AuxiliaryDistribution,
              params: KernelParams, pf_value: float) -> float:
    """Bound constant for the pointwise error bounds.

    eps = sup|d pi / d nu|^{1/2} * divergence, with the density-ratio sup
    bounded by Z_subset / ((2 pi sigma^2)^{(N-M')/2} Z_full); only the
    subset-of-data auxiliary admits this bound. ``pf_value`` must be the
    divergence itself (see ``pf_divergence_value``), not the scaled square.
    """
    if aux.kind != "subset":
        raise AuxKindUnsupportedError(
            "the density-ratio bound is only derived for the subset-of-data auxiliary"
        )
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    n, m_aux = X.shape[0], aux.m_aux
    log_z_full = log_marginal_likelihood(X, y, params)
    log_z_sub = log_marginal_likelihood(aux.aux_points, aux.aux_y, params)
    log_ratio = log_z_sub - 0.5 * (n - m_aux) * np.log(2.0 * np.pi * params.noise_variance) \
        - log_z_full
    return float(np.exp(0.5 * log_ratio) * pf_value)


@dataclass(frozen=True)
class PointwiseBounds:
    mean_bound: np.ndarray
    std_bound: np.ndarray
    var_bound: np.ndarray


def pointwise_bounds(eps: float, k_diag_star: np.ndarray,
                     k_under_star: np.ndarray) -> PointwiseBounds:
    """Pointwise mean/std/variance error bounds from the bound constant.

    mean: r(x,x)^{1/2} eps
    std:  sqrt(6) r(x,x)^{1/2} eps
    var:  3 r(x,x)^{1/2} kunder(x,x)^{1/2} eps + 6 r(x,x) eps^2

    with r = k and kunder the pointwise min of the approximate and exact
    posterior variances.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    k_diag_star = np.asarray(k_diag_star, dtype=float)
    k_under_star = np.asarray(k_under_star, dtype=float)
    root = np.sqrt(np.clip(k_diag_star, 0.0, None))
    mean_bound = root * eps
    std_bound = np.sqrt(6.0) * root * eps
    var_bound = 3.0 * root * np.sqrt(np.clip(k_under_star, 0.0, None)) * eps \
        + 6.0 * k_diag_star * eps**2
    return PointwiseBounds(mean_bound, std_bound, var_bound)


@dataclass(frozen=True)
class ImportanceEstimate:
    estimate: float
    std_error: float
    n_samples: int


def eps_importance_estimate(X: np.ndarray, y: np.ndarray, inducing: np.ndarray,
                            aux: AuxiliaryDistribution, params: KernelParams,
                            n_samples: int, seed: int) -> ImportanceEstimate:
    """Monte-Carlo estimate of the sigma^4-scaled squared divergence.

    Samples f from the exact posterior at X union the inducing points and
    averages the squared RKHS norm of the score-difference field; same
    units as ``pf_dtc_objective_full``. Diagnostic only.
    """
    X = as_inputs(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    Z = as_inputs(inducing, params.dim)
    cache = build_nystrom(X, Z, params)
    n, m = cache.n, cache.m

    joint = np.vstack([X, Z])
    post = predict_exact(fit_exact(X, y, params), joint)
    factor = chol_psd(post.cov)
    rng = np.random.default_rng(seed)
    samples = post.mean + rng.standard_normal((n_samples, n + m)) @ factor.lower.T

    fX = samples[:, :n]
    fI = samples[:, n:]
    a = fX - y
    resid = fX - fI @ cache.Qbar.T
    b = -(a @ cache.Qbar) + resid @ cache.sigma_tilde_solve(cache.K_XM.T).T
    coeffs = np.hstack([a, b])
    K_joint = kernel_matrix(joint, None, params)
    g = np.einsum("si,si->s", coeffs @ K_joint, coeffs)
    estimate = float(np.mean(g))
    std_error = float(np.std(g, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return ImportanceEstimate(estimate, std_error, n_samples)
