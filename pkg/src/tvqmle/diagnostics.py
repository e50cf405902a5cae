"""Finite-difference validation of the analytic likelihood derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import MGARCH, VARMA, ModelSpec, grad_at, hess_at, loglik_at, mgarch_spec, varma_spec

__all__ = ["GradCheck", "finite_difference_check", "random_config", "run_gradcheck"]


@dataclass
class GradCheck:
    grad_error: float
    hess_error: float


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def finite_difference_check(spec: ModelSpec, X, t: int, theta, step: float = 1e-3) -> GradCheck:
    """Compare the analytic gradient/Hessian at observation ``t`` with central differences.

    Uses the fourth-order stencil ``(-f(+2s) + 8 f(+s) - 8 f(-s) + f(-2s)) / 12 s``,
    which keeps both truncation and rounding error near 1e-12 at the default step.
    Errors are ``max|analytic - fd| / max(1, max|fd|)``.
    """
    theta = np.asarray(theta, dtype=float)
    g = grad_at(spec, X, t, theta)
    H = hess_at(spec, X, t, theta)
    gf = np.empty_like(g)
    Hf = np.empty_like(H)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        ll = [loglik_at(spec, X, t, theta + c * e) for c in (2, 1, -1, -2)]
        gg = [grad_at(spec, X, t, theta + c * e) for c in (2, 1, -1, -2)]
        gf[k] = (-ll[0] + 8 * ll[1] - 8 * ll[2] + ll[3]) / (12 * step)
        Hf[:, k] = (-gg[0] + 8 * gg[1] - 8 * gg[2] + gg[3]) / (12 * step)
    return GradCheck(_rel(g, gf), _rel(H, Hf))


def random_config(family: str, rng: np.random.Generator, zero: bool = False):
    """A random ``(spec, X, t, theta)`` well inside the valid region.

    ``zero=True`` gives a zero-coefficient model with identity covariance.
    """
    m = int(rng.integers(1, 4))
    p = int(rng.integers(1, 3))
    q = int(rng.integers(0 if family == VARMA else 1, 3))
    T = 40
    X = rng.standard_normal((T, m))
    if family == VARMA:
        spec = varma_spec(m, p, q, intercept=bool(rng.integers(0, 2)))
        theta = spec.default_theta()
        if not zero:
            theta[: spec.n_mean] = rng.uniform(-0.3, 0.3, spec.n_mean) / m
            L = np.tril(rng.uniform(-0.3, 0.3, (m, m)), -1) + np.diag(rng.uniform(0.5, 1.5, m))
            theta[spec.n_mean :] = [L[r, c] for c in range(m) for r in range(c, m)]
    elif family == MGARCH:
        spec = mgarch_spec(m, p, q)
        theta = spec.default_theta()
        if not zero:
            theta[:m] = rng.uniform(0.5, 2.0, m)
            theta[m : spec.n_mean] = rng.uniform(0.0, 0.3, spec.n_mean - m) / (m * (p + q))
            theta[spec.n_mean :] = rng.uniform(-0.4, 0.4, spec.n_cov) / m
    else:
        raise ValueError(f"unknown family {family!r}")
    t = int(rng.integers(T // 2, T + 1))
    return spec, X, t, theta


def run_gradcheck(family: str, n_configs: int = 20, seed: int = 0, zero: bool = False) -> GradCheck:
    """Worst-case errors over ``n_configs`` random configurations."""
    rng = np.random.default_rng(seed)
    ge = he = 0.0
    for _ in range(n_configs):
        res = finite_difference_check(*random_config(family, rng, zero))
        ge = max(ge, res.grad_error)
        he = max(he, res.hess_error)
    return GradCheck(ge, he)
