"""Sparse GP regression with divergence-optimized inducing points and pointwise error bounds."""

from .exact import GaussianPosterior, fit_exact, log_marginal_likelihood, predict_exact
from .kernels import KernelParams, kernel_diag, kernel_matrix
from .linalg import CholFactor, chol_psd, solve_psd, sqrtm_psd, trace_product
from .pf import (
    build_aux_sor,
    build_aux_subset,
    eps_bound,
    eps_importance_estimate,
    pf_dtc_gradient,
    pf_dtc_objective,
    pf_dtc_objective_full,
    pf_divergence_value,
    pointwise_bounds,
)
from .sparse import (
    NystromCache,
    build_nystrom,
    dtc_predict,
    fit_hyperparams_pilot,
    sor_predict,
    subsample_predict,
    vfe_elbo,
)

__version__ = "0.1.0"

__all__ = [
    "CholFactor", "chol_psd", "solve_psd", "sqrtm_psd", "trace_product",
    "KernelParams", "kernel_matrix", "kernel_diag",
    "GaussianPosterior", "fit_exact", "predict_exact", "log_marginal_likelihood",
    "NystromCache", "build_nystrom", "dtc_predict", "sor_predict",
    "subsample_predict", "vfe_elbo", "fit_hyperparams_pilot",
    "build_aux_subset", "build_aux_sor", "pf_dtc_objective",
    "pf_dtc_objective_full", "pf_dtc_gradient", "pf_divergence_value",
    "eps_bound", "pointwise_bounds", "eps_importance_estimate",
]
