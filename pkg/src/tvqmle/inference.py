"""Pointwise intervals and simultaneous confidence bands.

The band for ``theta_C = C theta`` is::

    theta_tilde_C(tau) + Sigma_C(tau)^{1/2} q_hat B_k,   Sigma_C = C Sigma_theta C'

with ``B_k`` the unit ball and ``q_hat`` the empirical quantile of the
multiplier statistic ``sup_tau |1/T sum_t v_t (2 w_{t,h/sqrt2}(tau) - w_{t,h}(tau))|``.
Both the supremum and the band live on the interior grid ``[h, 1-h]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .estimate import CovEstimate, CurveFit, fit_curve, sandwich_cov
from .exceptions import InsufficientReplications
from .kernels import EPANECHNIKOV, KernelSpec, check_bandwidth, fourth_order_moment, kernel_derivative, kernel_moment, weight_matrix
from .models import ModelSpec, check_series

__all__ = [
    "SelectionMatrix",
    "Band",
    "interior_grid",
    "pointwise_ci",
    "combined_weights",
    "multiplier_sup",
    "bootstrap_quantile",
    "band_from_fit",
    "scb",
    "constancy_test",
    "analytic_band_quantile",
    "psd_sqrt",
]

MIN_REPLICATIONS = 100


class SelectionMatrix:
    """Full row rank ``k x d`` matrix picking the parameter combinations of interest."""

    def __init__(self, C):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        if C.ndim != 2 or C.shape[0] == 0:
            raise ValueError("selection matrix must be a non-empty 2-d array")
        sv = np.linalg.svd(C, compute_uv=False)
        if sv.size < C.shape[0] or sv[-1] <= 1e-10:
            raise ValueError("selection matrix must have full row rank")
        self.C = C

    @classmethod
    def from_indices(cls, d: int, idx: Sequence[int]) -> "SelectionMatrix":
        idx = list(idx)
        C = np.zeros((len(idx), d))
        C[np.arange(len(idx)), idx] = 1.0
        return cls(C)

    @classmethod
    def from_names(cls, spec: ModelSpec, names) -> "SelectionMatrix":
        return cls.from_indices(spec.d, spec.index(names))

    @property
    def k(self) -> int:
        return self.C.shape[0]

    @property
    def d(self) -> int:
        return self.C.shape[1]


def _as_selection(C, d: int) -> SelectionMatrix:
    if C is None:
        return SelectionMatrix(np.eye(d))
    if isinstance(C, SelectionMatrix):
        sel = C
    else:
        sel = SelectionMatrix(C)
    if sel.d != d:
        raise ValueError(f"selection matrix has {sel.d} columns, model has {d} parameters")
    return sel


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped to zero."""
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


@dataclass
class Band:
    """Simultaneous confidence band on the interior grid.

    ``center`` is ``(G, k)``, ``sigma_C_sqrt`` is ``(G, k, k)``.
    """

    grid: np.ndarray
    center: np.ndarray
    q_hat: float
    sigma_C_sqrt: np.ndarray
    alpha: float
    R: int
    h: float
    C: Optional[np.ndarray] = None
    seed: Optional[int] = None

    @property
    def half_width(self) -> np.ndarray:
        """Per-coordinate projection of the ellipsoid: ``q_hat`` times the row norms of the root."""
        return self.q_hat * np.linalg.norm(self.sigma_C_sqrt, axis=2)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, curve) -> np.ndarray:
        """Per-coordinate indicator that ``curve`` (``(G, k)``) stays inside the projected band everywhere."""
        curve = np.asarray(curve, dtype=float)
        inside = (curve >= self.lower) & (curve <= self.upper)
        return inside.all(axis=0)

    def contains_ellipsoid(self, curve) -> bool:
        """Joint containment in the ellipsoids ``center + root q_hat B_k`` at every grid point."""
        curve = np.asarray(curve, dtype=float)
        for c, S, x in zip(self.center, self.sigma_C_sqrt, curve):
            r = np.linalg.lstsq(S, x - c, rcond=None)[0]
            if np.linalg.norm(r) > self.q_hat * (1 + 1e-12) or not np.allclose(S @ r, x - c):
                return False
        return True


def interior_grid(grid, h: float) -> np.ndarray:
    """Boolean mask of grid points in ``[h, 1-h]`` (with a rounding allowance)."""
    grid = np.asarray(grid, dtype=float)
    eps = 1e-9
    return (grid >= h - eps) & (grid <= 1.0 - h + eps)


def pointwise_ci(curve: CurveFit, covs: Sequence[CovEstimate], alpha: float, T: int,
                 kernel: KernelSpec = EPANECHNIKOV):
    """Pointwise ``1-alpha`` intervals ``theta_tilde_i +- z sqrt(v0 Sigma_theta_ii / (T h))``.

    Returns ``(lower, upper)``, each ``(G, d)``.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    v0 = fourth_order_moment(0, squared=True, spec=kernel)
    var = np.array([np.diag(c.Sigma_theta) for c in covs])
    half = z * np.sqrt(np.clip(v0 * var / (T * curve.h_used), 0.0, None))
    center = curve.bias_corrected
    return center - half, center + half


def combined_weights(grid, h: float, T: int, kernel: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """``(G, T)`` matrix of ``2 w_{t,h/sqrt2}(tau) - w_{t,h}(tau)``."""
    return 2.0 * weight_matrix(grid, h / math.sqrt(2.0), T, kernel) - weight_matrix(grid, h, T, kernel)


def multiplier_sup(weights: np.ndarray, v: np.ndarray) -> np.ndarray | float:
    """``max_tau |1/T sum_t v_t W(tau, t)|`` for one draw ``v`` (``(T, k)``) or a stack ``(R, T, k)``."""
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    v = np.asarray(v, dtype=float)
    T = W.shape[1]
    single = v.ndim <= 2
    if v.ndim == 1:
        v = v[:, None]
    if single:
        v = v[None]
    R, Tv, k = v.shape
    if Tv != T:
        raise ValueError(f"weights cover {T} observations, draws have {Tv}")
    V = (W @ v.transpose(1, 0, 2).reshape(T, R * k)).reshape(W.shape[0], R, k) / T
    sup = np.sqrt((V * V).sum(axis=2)).max(axis=0)
    return float(sup[0]) if single else sup


def bootstrap_quantile(weights: np.ndarray, k: int, alpha, R: int, seed, chunk: int = 250):
    """Empirical ``1-alpha`` quantile(s) (type 7) of the multiplier supremum; ``alpha = 1`` gives 0.

    ``seed`` seeds a PCG64 stream; draws are generated in a fixed order so the
    result depends only on ``(seed, R, k, T)``.
    """
    if R < MIN_REPLICATIONS:
        raise InsufficientReplications(f"need at least {MIN_REPLICATIONS} bootstrap replications, got {R}")
    W = np.atleast_2d(weights)
    T = W.shape[1]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    sups = np.empty(R)
    for s in range(0, R, chunk):
        n = min(chunk, R - s)
        sups[s : s + n] = multiplier_sup(W, rng.standard_normal((n, T, k)))
    levels = 1.0 - np.asarray(alpha, dtype=float)
    # alpha = 1 is the degenerate zero-width band
    return np.where(levels <= 0.0, 0.0, np.quantile(sups, levels)), sups


def band_from_fit(curve: CurveFit, covs: Sequence[CovEstimate], T: int, C=None, alpha: float = 0.05,
                  R: int = 1000, seed=None, kernel: KernelSpec = EPANECHNIKOV, q_hat: Optional[float] = None) -> Band:
    """Calibrate and assemble the band from an existing curve fit and covariances.

    Only grid points in ``[h, 1-h]`` are used.  ``q_hat`` may be supplied to
    reuse a quantile computed elsewhere.
    """
    d = curve.spec.d
    sel = _as_selection(C, d)
    mask = interior_grid(curve.grid, curve.h_used)
    if not mask.any():
        raise ValueError("no grid point lies in [h, 1-h]")
    grid = curve.grid[mask]
    if q_hat is None:
        W = combined_weights(grid, curve.h_used, T, kernel)
        q_hat = float(np.atleast_1d(bootstrap_quantile(W, sel.k, alpha, R, seed)[0])[0])
    center = curve.bias_corrected[mask] @ sel.C.T
    roots = np.array([psd_sqrt(sel.C @ c.Sigma_theta @ sel.C.T) for c, ok in zip(covs, mask) if ok])
    return Band(grid, center, float(q_hat), roots, float(alpha), int(R), float(curve.h_used), sel.C, seed)


def scb(spec: ModelSpec, X, grid, h: float, C=None, alpha: float = 0.05, R: int = 1000, seed=None,
        kernel: KernelSpec = EPANECHNIKOV, curve: Optional[CurveFit] = None, n_jobs: int = 1) -> Band:
    """Simultaneous confidence band for ``C theta(.)`` over ``[h, 1-h]``.

    Fits ``theta_hat`` at ``h`` and ``h/sqrt(2)`` (unless ``curve`` is given),
    bias-corrects, estimates the sandwich covariance at ``theta_hat_h`` and
    calibrates with ``R`` Gaussian multiplier draws.
    """
    if R < MIN_REPLICATIONS:
        raise InsufficientReplications(f"need at least {MIN_REPLICATIONS} bootstrap replications, got {R}")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    check_bandwidth(h)
    X = check_series(X, spec, min_length=True)
    grid = np.asarray(grid, dtype=float)
    grid = grid[interior_grid(grid, h)]
    if curve is None:
        curve = fit_curve(spec, X, grid, h, kernel=kernel, n_jobs=n_jobs)
    covs = [sandwich_cov(spec, X, tau, h, f.theta, kernel) for tau, f in zip(curve.grid, curve.fits)]
    return band_from_fit(curve, covs, X.shape[0], C, alpha, R, seed, kernel)


def constancy_test(band: Band) -> np.ndarray:
    """True per coordinate when a horizontal line fits inside the projected band."""
    return band.lower.max(axis=0) <= band.upper.min(axis=0)


def analytic_band_quantile(h: float, k: int, alpha: float, kernel: KernelSpec = EPANECHNIKOV) -> float:
    """Gumbel-type critical value ``B(1/h) + u_alpha / sqrt(2 log(1/h))``."""
    if not (0.0 < h < math.exp(-1.0)):
        raise ValueError("analytic band needs 0 < h < 1/e")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    kp2, _ = integrate.quad(lambda u: kernel_derivative(u, kernel) ** 2, -1.0, 1.0, epsabs=1e-13)
    v0 = kernel_moment(0, squared=True, spec=kernel)
    CK = math.sqrt(kp2 / (v0 * math.pi)) / special.gamma(k / 2.0)
    L = math.log(1.0 / h)
    s = math.sqrt(2.0 * L)
    B = s + (math.log(CK) + (k / 2.0 - 0.5) * math.log(L) - math.log(2.0)) / s
    u_alpha = -math.log(-math.log(1.0 - alpha) / 2.0)
    return B + u_alpha / s
