"""Local linear quasi-maximum likelihood for time-varying VARMA and MGARCH models."""

__version__ = "0.1.0"

from .bandwidth import CVResult, cv_score, select_bandwidth
from .estimate import CurveFit, LocalFit, LocalParams, fit_curve, fit_local, local_loglik, preliminary_init, sandwich_cov
from .estimator import LocalQMLE
from .inference import Band, SelectionMatrix, analytic_band_quantile, bootstrap_quantile, scb
from .kernels import EPANECHNIKOV, KernelSpec, kernel_eval, kernel_moment, local_linear_weights
from .models import ModelSpec, mgarch_spec, varma_spec
from .simulate import DgpSpec, coverage_study, dgp1, dgp2, simulate_dgp, stationary_approx

__all__ = [
    "Band", "CVResult", "CurveFit", "DgpSpec", "EPANECHNIKOV", "KernelSpec", "LocalFit", "LocalParams",
    "LocalQMLE", "ModelSpec", "SelectionMatrix", "analytic_band_quantile", "bootstrap_quantile", "coverage_study",
    "cv_score", "dgp1", "dgp2", "fit_curve", "fit_local", "kernel_eval", "kernel_moment", "local_linear_weights",
    "local_loglik", "mgarch_spec", "preliminary_init", "sandwich_cov", "scb", "select_bandwidth",
    "simulate_dgp", "stationary_approx", "varma_spec",
]
