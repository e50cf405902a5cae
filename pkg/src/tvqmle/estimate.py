"""Local linear quasi-maximum likelihood estimation.

At a point ``tau`` the level ``theta(tau)`` and scaled slope ``h theta'(tau)``
maximise::

    L_tau(eta1, eta2) = 1/T sum_t l(x_t, z_{t-1}; eta1 + eta2 (tau_t - tau)/h) K_h(tau_t - tau)

where each observation is evaluated with its own frozen parameter.  The
recursion for observation ``t`` is started ``lookback`` steps back (chosen
so that the neglected start-up term is below ``1e-7``) unless
``lookback=None`` asks for the exact full history.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import models
from .exceptions import (
    ConvergenceWarning,
    EmptyWindow,
    ModelEvaluationError,
    NearSingularInformation,
    RankDeficientDesign,
)
from .kernels import EPANECHNIKOV, KernelSpec, check_bandwidth
from .models import MGARCH, VARMA, ModelSpec, check_series

logger = logging.getLogger(__name__)

__all__ = [
    "LocalParams",
    "LocalFit",
    "CurveFit",
    "CovEstimate",
    "local_loglik",
    "fit_local",
    "fit_curve",
    "preliminary_init",
    "sandwich_cov",
    "choose_lookback",
]

GTOL = 1e-6
XTOL = 1e-9
MAXITER = 200
_LOOKBACK_TOL = 1e-7


@dataclass
class LocalParams:
    """Level ``eta1`` (= theta(tau)) and scaled slope ``eta2`` (= h theta'(tau))."""

    eta1: np.ndarray
    eta2: np.ndarray

    def __post_init__(self):
        self.eta1 = np.asarray(self.eta1, dtype=float).copy()
        self.eta2 = np.asarray(self.eta2, dtype=float).copy()

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.eta1, self.eta2])

    @classmethod
    def from_z(cls, z) -> "LocalParams":
        z = np.asarray(z, dtype=float)
        d = z.size // 2
        return cls(z[:d], z[d:])


@dataclass
class LocalFit:
    tau: float
    h: float
    params: LocalParams
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    lookback: int = -1
    history: list = field(default_factory=list, repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.params.eta1


@dataclass
class CurveFit:
    spec: ModelSpec
    grid: np.ndarray
    fits: list
    fits_half: list
    h_used: float
    h_half: float

    @property
    def theta_hat(self) -> np.ndarray:
        return np.array([f.theta for f in self.fits])

    @property
    def theta_half(self) -> np.ndarray:
        return np.array([f.theta for f in self.fits_half])

    @property
    def converged(self) -> np.ndarray:
        return np.array([a.converged and b.converged for a, b in zip(self.fits, self.fits_half)])

    @property
    def bias_corrected(self) -> np.ndarray:
        out = 2.0 * self.theta_half - self.theta_hat
        out[~self.converged] = np.nan
        return out

    @property
    def report(self) -> dict:
        bad = [float(t) for t, ok in zip(self.grid, self.converged) if not ok]
        return {"n_points": len(self.grid), "n_failed": len(bad), "failed_tau": bad}


@dataclass
class CovEstimate:
    """``Sigma_hat`` (averaged Hessian), ``Omega_hat`` (averaged score outer product), sandwich."""

    Sigma_hat: np.ndarray
    Omega_hat: np.ndarray
    Sigma_theta: np.ndarray
    clamped: bool = False


# --------------------------------------------------------------------------- objective


def _window(T: int, tau: float, h: float, kernel: KernelSpec, leave_out=None):
    tt = np.arange(1, T + 1) / T
    u = (tt - tau) / h
    w = kernel(u) / (h * T)
    if leave_out is not None:
        w[np.atleast_1d(leave_out)] = 0.0
    idx = np.flatnonzero(w > 0)
    if idx.size == 0:
        raise EmptyWindow(f"no observation within h={h} of tau={tau}")
    return idx, u[idx], w[idx]


class _LocalObjective:
    def __init__(self, spec, X, tau, h, lookback=-1, kernel=EPANECHNIKOV, leave_out=None):
        self.spec = spec
        self.X = X
        self.d = spec.d
        self.tidx, self.u, self.w = _window(X.shape[0], tau, h, kernel, leave_out)
        self.lookback = -1 if lookback is None else int(lookback)
        self.n_eval = 0

    def thetas(self, z):
        d = self.d
        return z[:d][None, :] + self.u[:, None] * z[d:][None, :]

    def __call__(self, z, order=0, exact=False):
        self.n_eval += 1
        ll, g, H = models.lanes(self.spec, self.X, self.tidx, self.thetas(z), self.lookback, order, exact)
        w, u = self.w, self.u
        f = float(w @ ll)
        if order == 0:
            return f, None, None
        wu = w * u
        grad = np.concatenate([w @ g, wu @ g])
        if order == 1:
            return f, grad, None
        H11 = np.tensordot(w, H, axes=1)
        H12 = np.tensordot(wu, H, axes=1)
        H22 = np.tensordot(wu * u, H, axes=1)
        hess = np.block([[H11, H12], [H12, H22]])
        return f, grad, 0.5 * (hess + hess.T)

    def endpoint_thetas(self, z):
        d = self.d
        return [z[:d] + uu * z[d:] for uu in (self.u.min(), 0.0, self.u.max())]


def choose_lookback(spec: ModelSpec, thetas, T: int, tol: float = _LOOKBACK_TOL) -> int:
    """Recursion lookback so the neglected start-up contribution is below ``tol``."""
    if spec.q == 0:
        return 0
    rad = 0.0
    for th in thetas:
        try:
            rad = max(rad, models.memory_radius(spec, th))
        except np.linalg.LinAlgError:
            return -1
    r = max(rad, 0.5) + 0.05
    if r >= 0.995:
        return -1
    L = int(math.ceil(math.log(tol) / math.log(r))) + spec.p + spec.q
    return -1 if L >= T else L


def local_loglik(spec: ModelSpec, X, tau: float, h: float, params: LocalParams, order: int = 0,
                 lookback: Optional[int] = None, kernel: KernelSpec = EPANECHNIKOV, leave_out=None, exact=True):
    """Kernel-weighted local linear quasi log-likelihood at ``tau``.

    Returns the value, or ``(value, grad, hess)`` in ``(eta1, eta2)``
    coordinates when ``order > 0``.  ``lookback=None`` uses the full history.
    """
    X = check_series(X, spec)
    obj = _LocalObjective(spec, X, tau, h, lookback, kernel, leave_out)
    f, g, H = obj(params.z, order, exact)
    return f if order == 0 else (f, g, H)


# --------------------------------------------------------------------------- optimizer


def _safe_eval(obj, z, order, exact=False):
    try:
        f, g, H = obj(z, order, exact)
    except ModelEvaluationError:
        return -np.inf, None, None
    if not np.isfinite(f):
        return -np.inf, None, None
    return f, g, H


class _EndpointObjective:
    """The local objective in window-endpoint coordinates.

    ``v = (eta1 + u_L eta2, eta1 + u_R eta2)`` where ``[u_L, u_R]`` is the
    range of ``(tau_t - tau)/h`` over the window.  Requiring every frozen
    parameter in the window to lie in the parameter box is then a box
    constraint on ``v`` (the parameter is linear in ``u``).
    """

    def __init__(self, obj: _LocalObjective):
        self.obj = obj
        d = obj.d
        uL, uR = float(obj.u.min()), float(obj.u.max())
        if uR - uL < 1e-12:
            uL, uR = uL - 1.0, uR + 1.0
        D = uR - uL
        I = np.eye(d)
        self.M = np.block([[uR / D * I, -uL / D * I], [-I / D, I / D]])  # z = M v
        self.Minv = np.block([[I, uL * I], [I, uR * I]])  # v = Minv z

    def to_z(self, v):
        return self.M @ v

    def to_v(self, z):
        return self.Minv @ z

    def __call__(self, v, order=0, exact=False):
        f, g, H = self.obj(self.M @ v, order, exact)
        if g is not None:
            g = self.M.T @ g
        if H is not None:
            H = self.M.T @ H @ self.M
        return f, g, H


def _finite(f, g, H) -> bool:
    return bool(np.isfinite(f) and g is not None and np.all(np.isfinite(g)) and np.all(np.isfinite(H)))


def _projected_gradient(v, g, lo, hi, eps):
    at_lo = (v <= lo + eps) & (g < 0)
    at_hi = (v >= hi - eps) & (g > 0)
    return np.where(at_lo | at_hi, 0.0, g), at_lo | at_hi


def _maximize(obj, v0, lo, hi, gtol=GTOL, xtol=XTOL, maxiter=MAXITER, exact_below=1e-2):
    """Projected Newton ascent on a box with Armijo backtracking along the projection arc.

    Coordinates within ``eps`` of a bound whose gradient points outward are
    held at the bound; the Newton system is solved on the remaining block
    with the negated Hessian made positive definite by eigenvalue clamping.
    The cheap Hessian (no second state derivatives) is used until the
    projected gradient drops below ``exact_below``.
    """
    v = np.clip(v0, lo, hi)
    f, g, H = _safe_eval(obj, v, 2, False)
    if not np.isfinite(f):
        raise ModelEvaluationError("initial point is not evaluable")
    history = [f]
    it = 0
    converged = False
    exact = False
    pg, _ = _projected_gradient(v, g, lo, hi, 1e-12)
    gnorm = float(np.max(np.abs(pg)))
    while True:
        if gnorm < gtol:
            converged = True
            break
        if it >= maxiter:
            break
        if not exact and gnorm < exact_below:
            fe, ge, He = _safe_eval(obj, v, 2, True)
            exact = True
            if _finite(fe, ge, He):
                f, g, H = fe, ge, He
            else:
                exact_below = -1.0
                exact = False
        if not _finite(f, g, H):
            break
        eps = min(1e-6, gnorm)
        _, active = _projected_gradient(v, g, lo, hi, eps)
        free = ~active
        step_dir = np.zeros_like(v)
        if free.any():
            lam, V = np.linalg.eigh(-H[np.ix_(free, free)])
            floor = max(1e-8 * float(np.max(np.abs(lam))), 1e-12)
            lam = np.maximum(np.abs(lam), floor)
            step_dir[free] = V @ ((V.T @ g[free]) / lam)
        if active.any():
            diag = np.maximum(np.abs(np.diag(H))[active], 1e-12)
            step_dir[active] = g[active] / diag
        t = 1.0
        accepted = False
        while t > 1e-12:
            vn = np.clip(v + t * step_dir, lo, hi)
            fn, _, _ = _safe_eval(obj, vn, 0)
            if fn >= f + 1e-4 * float(g @ (vn - v)) and fn >= f:
                fn, gn, Hn = _safe_eval(obj, vn, 2, exact)
                # derivatives can overflow where the value does not
                if _finite(fn, gn, Hn):
                    accepted = True
                    break
            t *= 0.5
        it += 1
        if not accepted:
            break
        dv = float(np.max(np.abs(vn - v)))
        v, f, g, H = vn, fn, gn, Hn
        history.append(f)
        pg, _ = _projected_gradient(v, g, lo, hi, 1e-12)
        gnorm = float(np.max(np.abs(pg)))
        if dv < xtol:
            converged = gnorm < gtol
            break
    return v, f, g, gnorm, it, converged, history


def _start_point(eobj: _EndpointObjective, z0, lo, hi):
    """Project the start into the box and pick the best of the full, half and zero slope.

    Extrapolated slopes can put the far end of the window in an explosive
    region where the objective is finite but useless.  If none of the three
    is evaluable the slope keeps shrinking toward a constant curve.
    """
    d = eobj.obj.d
    v = np.clip(eobj.to_v(z0), lo, hi)
    mid = 0.5 * (v[:d] + v[d:])
    best, fbest = None, -np.inf
    for s in (1.0, 0.5, 0.0):
        c = np.concatenate([mid + s * (v[:d] - mid), mid + s * (v[d:] - mid)])
        fc = _safe_eval(eobj, c, 0)[0]
        if fc > fbest:
            best, fbest = c, fc
    if best is not None:
        return best
    for _ in range(30):
        if np.isfinite(_safe_eval(eobj, v, 0)[0]):
            return v
        mid = 0.5 * (v[:d] + v[d:])
        v = np.concatenate([0.5 * (v[:d] + mid), 0.5 * (v[d:] + mid)])
    th = np.clip(eobj.obj.spec.default_theta(), lo[:d], hi[:d])
    return np.concatenate([th, th])


def fit_local(spec: ModelSpec, X, tau: float, h: float, init: LocalParams, lookback="auto",
              kernel: KernelSpec = EPANECHNIKOV, leave_out=None, gtol: float = GTOL, maxiter: int = MAXITER,
              warn: bool = False) -> LocalFit:
    """Maximise the local linear quasi log-likelihood at ``tau``.

    The search runs over local linear curves whose frozen parameter stays
    in the parameter box at every observation of the window (see
    :class:`_EndpointObjective`); ``init`` is projected onto that set.
    ``grad_norm`` is the projected gradient in endpoint coordinates.
    Non-convergence is reported through ``LocalFit.converged``.
    """
    X = check_series(X, spec)
    T = X.shape[0]
    d = spec.d
    lo1, hi1 = spec.bounds()
    lo = np.concatenate([lo1, lo1])
    hi = np.concatenate([hi1, hi1])
    obj = _LocalObjective(spec, X, tau, h, -1, kernel, leave_out)
    eobj = _EndpointObjective(obj)
    z0 = np.asarray(init.z, dtype=float)
    v0 = np.clip(eobj.to_v(z0), lo, hi)
    if lookback == "auto":
        # margin so that small moves of the memory radius do not force a refit
        L = choose_lookback(spec, obj.endpoint_thetas(eobj.to_z(v0)), T)
        L = -1 if L < 0 or 1.1 * L >= T else int(math.ceil(1.1 * L))
    else:
        L = -1 if lookback is None else int(lookback)
    obj.lookback = L
    v0 = _start_point(eobj, z0, lo, hi)
    history: list = []
    iters = 0
    for _ in range(3):
        v, f, g, gnorm, it, conv, hist = _maximize(eobj, v0, lo, hi, gtol=gtol, maxiter=maxiter - iters)
        history += hist
        iters += it
        if lookback != "auto":
            break
        need = choose_lookback(spec, obj.endpoint_thetas(eobj.to_z(v)), T)
        if obj.lookback < 0 or (0 <= need <= obj.lookback):
            break
        obj.lookback = need
        v0 = v
    z = eobj.to_z(v)
    fit = LocalFit(float(tau), float(h), LocalParams.from_z(z), f, gnorm, iters, conv, obj.lookback, history)
    if warn and not conv:
        warnings.warn(f"local fit at tau={tau:.4f} did not converge (|grad|={gnorm:.2e})", ConvergenceWarning,
                      stacklevel=2)
    return fit


# --------------------------------------------------------------------------- preliminary LS


def _lagmat(Y: np.ndarray, lags: int) -> np.ndarray:
    """``(T, lags*m)`` matrix of ``[y_{t-1}, ..., y_{t-lags}]`` with zero pre-sample."""
    T, m = Y.shape
    out = np.zeros((T, lags * m))
    for j in range(1, lags + 1):
        out[j:, (j - 1) * m : j * m] = Y[:-j]
    return out


def _local_ls(Z: np.ndarray, Y: np.ndarray, u: np.ndarray, w: np.ndarray):
    """Weighted local linear LS of ``Y`` on ``[Z, Z*u]``; returns (level, slope) coefficient arrays."""
    k = Z.shape[1]
    D = np.hstack([Z, Z * u[:, None]])
    live = np.any(D != 0.0, axis=0)
    coef = np.zeros((2 * k,) + Y.shape[1:])
    if live.any():
        Dl = D[:, live]
        sw = np.sqrt(w)
        N = (Dl * w[:, None]).T @ Dl
        ev = np.linalg.eigvalsh(N)
        if ev[0] <= 0 or ev[-1] / ev[0] > 1e12:
            raise RankDeficientDesign(f"local least-squares normal matrix has condition number {ev[-1] / max(ev[0], 1e-300):.3g}")
        sol, *_ = np.linalg.lstsq(Dl * sw[:, None], Y * (sw[:, None] if Y.ndim == 2 else sw), rcond=None)
        coef[live] = sol
    return coef[:k], coef[k:]


def _ls_window(T, tau, h, start, kernel):
    tt = np.arange(1, T + 1) / T
    u = (tt - tau) / h
    w = kernel(u) / h
    sel = np.flatnonzero(w > 0)
    sel = sel[sel >= start]
    return sel, u[sel], w[sel]


def _long_var_fitted(Y, h, kernel, intercept):
    """Fitted values of a long local linear TV-VAR(p_T) on ``Y``."""
    T, m = Y.shape
    pT = max(1, int(round(2.0 * (T * h) ** (1.0 / 3.0))))
    Z = _lagmat(Y, pT)
    if intercept:
        Z = np.hstack([np.ones((T, 1)), Z])
    n_nodes = int(math.ceil(2.0 / h)) + 1
    nodes = np.linspace(0.0, 1.0, n_nodes)
    levels, slopes = [], []
    for tau in nodes:
        sel, u, w = _ls_window(T, tau, h, pT, kernel)
        if sel.size < 20:
            raise RankDeficientDesign(f"too few usable observations for a VAR({pT}) preliminary fit")
        a, b = _local_ls(Z[sel], Y[sel], u, w)
        levels.append(a)
        slopes.append(b)
    tt = np.arange(1, T + 1) / T
    near = np.abs(tt[:, None] - nodes[None, :]).argmin(axis=1)
    fitted = np.empty_like(Y)
    for i in range(n_nodes):
        idx = np.flatnonzero(near == i)
        if idx.size:
            uu = (tt[idx] - nodes[i]) / h
            fitted[idx] = Z[idx] @ levels[i] + (Z[idx] * uu[:, None]) @ slopes[i]
    return fitted, pT


def _vech(M, strict=False):
    m = M.shape[-1]
    if strict:
        return np.stack([M[..., r, c] for c in range(m) for r in range(c + 1, m)], axis=-1)
    return np.stack([M[..., r, c] for c in range(m) for r in range(c, m)], axis=-1)


def _psd_floor(S, floor):
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.maximum(lam, floor)) @ V.T


def _chol_slope(S, dS):
    L0 = np.linalg.cholesky(S)
    delta = 1e-4
    try:
        Lp = np.linalg.cholesky(S + delta * dS)
        Lm = np.linalg.cholesky(S - delta * dS)
    except np.linalg.LinAlgError:
        return L0, np.zeros_like(L0)
    return L0, (Lp - Lm) / (2 * delta)


def preliminary_init(spec: ModelSpec, X, h: float, grid=None, kernel: KernelSpec = EPANECHNIKOV) -> list:
    """Least-squares starting values built from a long TV-VAR fit.

    VARMA: residuals of a long local linear VAR stand in for the unobserved
    innovations; the (restricted) coefficients and the innovation covariance
    then follow by local linear least squares.  MGARCH: the same idea on the
    squared series ``y_t = x_t * x_t``, whose VARMA representation has AR
    coefficients ``C_j + D_j`` and MA coefficients ``-D_j``.

    Returns one :class:`LocalParams` per point of ``grid`` (default: 0.5).
    """
    X = check_series(X, spec)
    T, m = X.shape
    grid = np.atleast_1d(0.5 if grid is None else grid).astype(float)
    if spec.family == VARMA:
        return _prelim_varma(spec, X, h, grid, kernel)
    return _prelim_garch(spec, X, h, grid, kernel)


def _prelim_varma(spec, X, h, grid, kernel):
    T, m = X.shape
    fitted, pT = _long_var_fitted(X, h, kernel, spec.intercept)
    eta_hat = X - fitted
    da, dA, dB = spec._structure
    nb = spec.n_mean
    # regressor of parameter k for observation t: da[k] + sum_j dA[k,j] x_{t-j} + sum_j dB[k,j] eta_{t-j}
    reg = np.tile(da[None, :, :], (T, 1, 1))  # (T, nb, m)
    for j in range(1, spec.p + 1):
        xl = np.zeros_like(X)
        xl[j:] = X[:-j]
        reg += np.einsum("krc,tc->tkr", dA[:, j - 1], xl)
    for j in range(1, spec.q + 1):
        el = np.zeros_like(eta_hat)
        el[j:] = eta_hat[:-j]
        reg += np.einsum("krc,tc->tkr", dB[:, j - 1], el)
    out = []
    start = pT + max(spec.p, spec.q)
    for tau in grid:
        sel, u, w = _ls_window(T, tau, h, start, kernel)
        if sel.size < 20:
            raise RankDeficientDesign("too few usable observations for the preliminary fit")
        # stack equations: rows (t, r), columns k
        Z = reg[sel].transpose(0, 2, 1).reshape(-1, nb)
        Y = X[sel].reshape(-1)
        uu = np.repeat(u, m)
        ww = np.repeat(w, m)
        g1, g2 = _local_ls(Z, Y, uu, ww)
        E = eta_hat[sel]
        V = _vech(E[:, :, None] * E[:, None, :])
        ones = np.ones((sel.size, 1))
        v1, v2 = _local_ls(ones, V, u, w)
        S = np.zeros((m, m))
        dS = np.zeros((m, m))
        idx = 0
        for c in range(m):
            for r in range(c, m):
                S[r, c] = S[c, r] = v1[0, idx]
                dS[r, c] = dS[c, r] = v2[0, idx]
                idx += 1
        scale = max(float(np.trace(S)) / m, 0.0)
        S = _psd_floor(S, max(1e-6 * scale, 1e-8))
        L0, L1 = _chol_slope(S, dS)
        eta1 = np.concatenate([g1, [L0[r, c] for c in range(m) for r in range(c, m)]])
        eta2 = np.concatenate([g2, [L1[r, c] for c in range(m) for r in range(c, m)]])
        out.append(_project_params(spec, eta1, eta2))
    return out


def _prelim_garch(spec, X, h, grid, kernel):
    T, m = X.shape
    p, q = spec.p, spec.q
    mm = m * m
    Y = X * X
    fitted, pT = _long_var_fitted(Y, h, kernel, True)
    h_hat = np.maximum(fitted, 1e-8)
    v_hat = Y - h_hat
    eta_hat = X / np.sqrt(h_hat)
    r = max(p, q)
    Z = np.hstack([np.ones((T, 1)), _lagmat(Y, r), _lagmat(v_hat, q)])
    out = []
    start = pT + r
    for tau in grid:
        sel, u, w = _ls_window(T, tau, h, start, kernel)
        if sel.size < 20:
            raise RankDeficientDesign("too few usable observations for the preliminary fit")
        b1, b2 = _local_ls(Z[sel], Y[sel], u, w)  # (1 + m r + m q, m)

        def blocks(b):
            c0 = b[0]
            Phi = [b[1 + j * m : 1 + (j + 1) * m].T for j in range(r)]
            Psi = [b[1 + r * m + j * m : 1 + r * m + (j + 1) * m].T for j in range(q)]
            D = [-P for P in Psi]
            C = [Phi[j] - (D[j] if j < q else 0.0) for j in range(p)]
            return c0, C, D

        c01, C1, D1 = blocks(b1)
        c02, C2, D2 = blocks(b2)
        E = eta_hat[sel]
        ones = np.ones((sel.size, 1))
        if m > 1:
            V = _vech(E[:, :, None] * E[:, None, :], strict=True)
            s1, s2 = _local_ls(ones, V, u, w)
            sd = np.sqrt(np.maximum(_local_ls(ones, E * E, u, w)[0][0], 1e-8))
            rs = np.array([sd[rr] * sd[cc] for cc in range(m) for rr in range(cc + 1, m)])
            rho1, rho2 = s1[0] / rs, s2[0] / rs
        else:
            rho1 = rho2 = np.zeros(0)
        mean_y = np.average(Y[sel], axis=0, weights=w)
        c01 = np.where(c01 > 1e-3 * mean_y, c01, 0.1 * mean_y + 1e-8)
        eta1 = np.concatenate([c01] + [c.ravel(order="F") for c in C1] + [d.ravel(order="F") for d in D1] + [rho1])
        eta2 = np.concatenate([c02] + [c.ravel(order="F") for c in C2] + [d.ravel(order="F") for d in D2] + [rho2])
        lvl = eta1[m : spec.n_mean]
        lvl = np.clip(lvl, 0.0, None)
        S = sum(lvl[j * mm : (j + 1) * mm].reshape(m, m, order="F") for j in range(p + q))
        rad = float(np.max(np.abs(np.linalg.eigvals(S)))) if S is not None else 0.0
        if rad > 0.95:
            lvl *= 0.95 / rad
        eta1[m : spec.n_mean] = lvl
        if m > 1:
            eta1[spec.n_mean :] = np.clip(eta1[spec.n_mean :], -0.9, 0.9)
        out.append(_project_params(spec, eta1, eta2))
    return out


def _project_params(spec, eta1, eta2) -> LocalParams:
    lo, hi = spec.bounds()
    e1 = np.clip(eta1, lo, hi)
    e2 = np.where(e1 != eta1, 0.0, eta2)
    if spec.family == MGARCH and spec.m > 1:
        Om = spec.unpack(e1)["Omega"]
        if np.linalg.eigvalsh(Om)[0] <= 1e-3:
            e1[spec.n_mean :] *= 0.5
    return LocalParams(e1, e2)


# --------------------------------------------------------------------------- curve


def _shift(params: LocalParams, dtau: float, h_from: float, h_to: float) -> LocalParams:
    """Move a local linear solution to a nearby point / bandwidth."""
    eta1 = params.eta1 + params.eta2 * dtau / h_from
    return LocalParams(eta1, params.eta2 * h_to / h_from)


def _fit_pair(spec, X, tau, h, init, lookback, kernel, init_half=None):
    h2 = h / math.sqrt(2.0)
    f1 = fit_local(spec, X, tau, h, init, lookback=lookback, kernel=kernel)
    if init_half is None:
        init_half = _shift(f1.params, 0.0, h, h2)
    f2 = fit_local(spec, X, tau, h2, init_half, lookback=lookback, kernel=kernel)
    if not f2.converged and f1.converged:
        # restart from the h solution, keep whichever is better
        alt = fit_local(spec, X, tau, h2, _shift(f1.params, 0.0, h, h2), lookback=lookback, kernel=kernel)
        if (alt.converged, alt.loglik) > (f2.converged, f2.loglik):
            f2 = alt
    return f1, f2


def fit_curve(spec: ModelSpec, X, grid, h: float, init: Optional[LocalParams] = None, chained: bool = True,
              reverse: bool = False, lookback="auto", kernel: KernelSpec = EPANECHNIKOV, n_jobs: int = 1,
              check_h: bool = True) -> CurveFit:
    """Fit ``theta_hat`` at bandwidths ``h`` and ``h/sqrt(2)`` over ``grid``.

    In chained mode grid points are visited in order (or in reverse) and each
    fit starts from its neighbour's solution; the first point starts from
    :func:`preliminary_init` unless ``init`` is given.  With
    ``chained=False`` every point is initialised independently and points
    may be processed in parallel (``n_jobs``).
    """
    X = check_series(X, spec, min_length=True)
    if check_h:
        check_bandwidth(h)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
        raise ValueError("grid must be a non-empty strictly increasing subset of [0, 1]")
    h2 = h / math.sqrt(2.0)
    G = grid.size
    if not chained:
        inits = preliminary_init(spec, X, h, grid, kernel)
        pairs = Parallel(n_jobs=n_jobs)(
            delayed(_fit_pair)(spec, X, tau, h, ini, lookback, kernel) for tau, ini in zip(grid, inits)
        )
    else:
        order = range(G - 1, -1, -1) if reverse else range(G)
        # two warm-start chains, one per bandwidth
        pairs = [None] * G
        prev_tau = None
        cur = init
        cur_half = None
        for i in order:
            tau = grid[i]
            dtau = 0.0 if prev_tau is None else tau - prev_tau
            cur = preliminary_init(spec, X, h, tau, kernel)[0] if cur is None else _shift(cur, dtau, h, h)
            if cur_half is not None:
                cur_half = _shift(cur_half, dtau, h2, h2)
            pairs[i] = _fit_pair(spec, X, tau, h, cur, lookback, kernel, cur_half)
            f1, f2 = pairs[i]
            if not f1.converged:
                # do not propagate a failed solution along the chain
                pairs[i] = _fit_pair(spec, X, tau, h, preliminary_init(spec, X, h, tau, kernel)[0], lookback,
                                     kernel, f2.params if f2.converged else None)
                f1, f2 = pairs[i]
            cur = f1.params if f1.converged else None
            cur_half = f2.params if f2.converged else None
            prev_tau = tau
    fits = [p[0] for p in pairs]
    half = [p[1] for p in pairs]
    curve = CurveFit(spec, grid, fits, half, float(h), float(h2))
    rep = curve.report
    if rep["n_failed"]:
        logger.warning("%d of %d grid points did not converge", rep["n_failed"], rep["n_points"])
    return curve


# --------------------------------------------------------------------------- covariance


def _sym_inverse(S: np.ndarray):
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    eps = 1e-10 * float(np.max(np.abs(lam))) if lam.size else 0.0
    small = np.abs(lam) < eps
    clamped = bool(np.any(small))
    if clamped:
        lam = np.where(small, np.where(lam > 0, eps, -eps), lam)
    return (V / lam) @ V.T, clamped


def sandwich_cov(spec: ModelSpec, X, tau: float, h: float, theta_hat, kernel: KernelSpec = EPANECHNIKOV) -> CovEstimate:
    """Local-constant sandwich covariance ``Sigma^-1 Omega Sigma^-1`` at ``tau``."""
    X = check_series(X, spec)
    T = X.shape[0]
    idx, _, w = _window(T, tau, h, kernel)
    w = w / w.sum()
    ll, g, H, _ = models._path(spec, X, np.asarray(theta_hat, dtype=float), int(idx[-1]), int(idx[0]), 2, True)
    g = g[idx - idx[0]]
    H = H[idx - idx[0]]
    Sig = np.tensordot(w, H, axes=1)
    Sig = 0.5 * (Sig + Sig.T)
    Om = (g * w[:, None]).T @ g
    Om = 0.5 * (Om + Om.T)
    Si, clamped = _sym_inverse(Sig)
    if clamped:
        warnings.warn(f"averaged Hessian nearly singular at tau={tau:.4f}; eigenvalues clamped",
                      NearSingularInformation, stacklevel=2)
    St = Si @ Om @ Si
    return CovEstimate(Sig, Om, 0.5 * (St + St.T), clamped)
