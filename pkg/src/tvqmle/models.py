"""Time-varying VARMA and multivariate GARCH likelihood models.

Both families are causal processes ``x_t = mu(z_{t-1}; theta) + H(z_{t-1}; theta) e_t``
whose Gaussian quasi log-likelihood per observation is::

    l_t = -1/2 (x_t - mu)' M^{-1} (x_t - mu) - 1/2 log det M,   M = H H'

Series are ``(T, m)`` arrays (rows are observations).  Observation numbers
passed to :func:`loglik_at` and friends are 1-based, ``1 <= t <= T``; the
history before observation 1 is zero-padded.

Parameter layout
----------------
VARMA: ``[a (if intercept), gamma, vech(omega)]`` where
``vec(A_1..A_p, B_1..B_q) = R @ gamma`` (``R`` defaults to the identity) and
``omega`` is the lower Cholesky factor of the innovation covariance.

MGARCH: ``[c0, vec(C_1..C_p), vec(D_1..D_q), vechl(Omega)]`` where
``Omega`` is the innovation correlation matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import _recursions as _rec
from .exceptions import NonPositiveVolatility, SingularCovariance, StationarityWarning

__all__ = [
    "ModelSpec",
    "varma_spec",
    "mgarch_spec",
    "check_series",
    "is_valid",
    "loglik_at",
    "grad_at",
    "hess_at",
    "loglik_path",
    "varma_residuals",
    "garch_volatility",
    "stationarity_report",
]

VARMA = "varma"
MGARCH = "mgarch"

_RHO_BOUND = 0.999
_POS_FLOOR = 1e-6


def _vec_names(prefix: str, m: int) -> list[str]:
    return [f"{prefix}_{r + 1}{c + 1}" for c in range(m) for r in range(m)]


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Model family, orders and parameter layout.

    Parameters
    ----------
    family : {"varma", "mgarch"}
    m : int
        Series dimension.
    p, q : int
        VARMA: AR and MA orders.  MGARCH: ARCH (``C_j``) and GARCH (``D_j``) orders.
    intercept : bool
        VARMA only; include the intercept ``a``.
    restriction : array, optional
        VARMA only.  Full column rank matrix ``R`` with
        ``vec(A_1..A_p, B_1..B_q) = R @ gamma``.
    names : sequence of str, optional
        Names of the free ``gamma`` coefficients when ``restriction`` is given.
    """

    family: str
    m: int
    p: int = 1
    q: int = 1
    intercept: bool = True
    restriction: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in (VARMA, MGARCH):
            raise ValueError(f"family must be 'varma' or 'mgarch', got {self.family!r}")
        object.__setattr__(self, "family", fam)
        if self.m < 1 or self.p < 0 or self.q < 0:
            raise ValueError("need m >= 1 and p, q >= 0")
        if fam == MGARCH:
            if self.restriction is not None:
                raise ValueError("restrictions are only supported for VARMA models")
            if self.p < 1:
                raise ValueError("MGARCH needs at least one ARCH lag (p >= 1)")
            object.__setattr__(self, "intercept", False)
        if self.restriction is not None:
            R = np.asarray(self.restriction, dtype=float)
            n_ab = self.m * self.m * (self.p + self.q)
            if R.ndim != 2 or R.shape[0] != n_ab:
                raise ValueError(f"restriction must have {n_ab} rows, got shape {R.shape}")
            if np.linalg.matrix_rank(R) != R.shape[1]:
                raise ValueError("restriction matrix must have full column rank")
            object.__setattr__(self, "restriction", R)
            if self.names is not None and len(self.names) != R.shape[1]:
                raise ValueError("names must match the number of restriction columns")

    # ------------------------------------------------------------------ layout
    @property
    def n_gamma(self) -> int:
        if self.restriction is not None:
            return self.restriction.shape[1]
        return self.m * self.m * (self.p + self.q)

    @property
    def n_mean(self) -> int:
        """VARMA: size of the conditional-mean block. MGARCH: size of the volatility block."""
        if self.family == VARMA:
            return self.m * int(self.intercept) + self.n_gamma
        return self.m + self.m * self.m * (self.p + self.q)

    @property
    def n_cov(self) -> int:
        m = self.m
        return m * (m + 1) // 2 if self.family == VARMA else m * (m - 1) // 2

    @property
    def d(self) -> int:
        return self.n_mean + self.n_cov

    @cached_property
    def layout(self) -> list[str]:
        m = self.m
        out: list[str] = []
        if self.family == VARMA:
            if self.intercept:
                out += [f"a_{i + 1}" for i in range(m)]
            if self.restriction is not None:
                out += list(self.names) if self.names is not None else [f"gamma_{i + 1}" for i in range(self.n_gamma)]
            else:
                for j in range(self.p):
                    out += _vec_names(f"A{j + 1}", m)
                for j in range(self.q):
                    out += _vec_names(f"B{j + 1}", m)
            out += [f"omega_{r + 1}{c + 1}" for c in range(m) for r in range(c, m)]
        else:
            out += [f"c0_{i + 1}" for i in range(m)]
            for j in range(self.p):
                out += _vec_names(f"C{j + 1}", m)
            for j in range(self.q):
                out += _vec_names(f"D{j + 1}", m)
            out += [f"rho_{r + 1}{c + 1}" for c in range(m) for r in range(c + 1, m)]
        return out

    def index(self, names: str | Sequence[str]) -> list[int]:
        """Positions of named parameters in the layout."""
        if isinstance(names, str):
            names = [names]
        lay = self.layout
        return [lay.index(n) for n in names]

    @cached_property
    def _structure(self):
        """Derivative structure of the (linear) VARMA mean block."""
        m, p, q = self.m, self.p, self.q
        nb = self.n_mean
        da = np.zeros((nb, m))
        dA = np.zeros((nb, p, m, m))
        dB = np.zeros((nb, q, m, m))
        off = 0
        if self.intercept:
            for i in range(m):
                da[i, i] = 1.0
            off = m
        R = self.restriction if self.restriction is not None else np.eye(m * m * (p + q))
        for k in range(R.shape[1]):
            col = R[:, k]
            for j in range(p):
                dA[off + k, j] = col[j * m * m : (j + 1) * m * m].reshape(m, m, order="F")
            for j in range(q):
                s = (p + j) * m * m
                dB[off + k, j] = col[s : s + m * m].reshape(m, m, order="F")
        return da, dA, dB

    # ------------------------------------------------------------ conversions
    def unpack(self, theta) -> dict:
        """Split a parameter vector into named matrices."""
        theta = np.asarray(theta, dtype=float)
        m, p, q = self.m, self.p, self.q
        if self.family == VARMA:
            da, dA, dB = self._structure
            nb = self.n_mean
            a = theta[:nb] @ da
            A = np.einsum("k,kjrc->jrc", theta[:nb], dA)
            B = np.einsum("k,kjrc->jrc", theta[:nb], dB)
            L = np.zeros((m, m))
            idx = nb
            for c in range(m):
                for r in range(c, m):
                    L[r, c] = theta[idx]
                    idx += 1
            return {"a": a, "A": A, "B": B, "omega": L, "Omega": L @ L.T}
        mm = m * m
        c0 = theta[:m]
        C = np.array([theta[m + j * mm : m + (j + 1) * mm].reshape(m, m, order="F") for j in range(p)])
        off = m + p * mm
        D = np.array([theta[off + j * mm : off + (j + 1) * mm].reshape(m, m, order="F") for j in range(q)]).reshape(q, m, m)
        Om = np.eye(m)
        idx = off + q * mm
        for c in range(m):
            for r in range(c + 1, m):
                Om[r, c] = Om[c, r] = theta[idx]
                idx += 1
        return {"c0": c0, "C": C, "D": D, "Omega": Om}

    def pack(self, **blocks) -> np.ndarray:
        """Inverse of :meth:`unpack` for unrestricted layouts (``gamma`` may be passed directly)."""
        m, p, q = self.m, self.p, self.q
        if self.family == VARMA:
            parts = []
            if self.intercept:
                parts.append(np.asarray(blocks.get("a", np.zeros(m)), dtype=float).ravel())
            if "gamma" in blocks:
                parts.append(np.asarray(blocks["gamma"], dtype=float).ravel())
            else:
                if self.restriction is not None:
                    raise ValueError("restricted layouts need 'gamma'")
                A = np.asarray(blocks.get("A", np.zeros((p, m, m))), dtype=float).reshape(p, m, m)
                B = np.asarray(blocks.get("B", np.zeros((q, m, m))), dtype=float).reshape(q, m, m)
                parts += [A[j].ravel(order="F") for j in range(p)] + [B[j].ravel(order="F") for j in range(q)]
            L = np.asarray(blocks.get("omega", np.eye(m)), dtype=float)
            parts.append(np.array([L[r, c] for c in range(m) for r in range(c, m)]))
            return np.concatenate(parts)
        C = np.asarray(blocks.get("C", np.zeros((p, m, m))), dtype=float).reshape(p, m, m)
        D = np.asarray(blocks.get("D", np.zeros((q, m, m))), dtype=float).reshape(q, m, m)
        Om = np.asarray(blocks.get("Omega", np.eye(m)), dtype=float)
        parts = [np.asarray(blocks["c0"], dtype=float).ravel()]
        parts += [C[j].ravel(order="F") for j in range(p)] + [D[j].ravel(order="F") for j in range(q)]
        parts.append(np.array([Om[r, c] for c in range(m) for r in range(c + 1, m)]))
        return np.concatenate(parts)

    # --------------------------------------------------------------- bounds
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box used by the optimizer for the level coordinates."""
        lo = np.full(self.d, -np.inf)
        hi = np.full(self.d, np.inf)
        m = self.m
        if self.family == VARMA:
            nb = self.n_mean
            idx = nb
            for c in range(m):
                for r in range(c, m):
                    if r == c:
                        lo[idx] = _POS_FLOOR
                    idx += 1
        else:
            lo[:m] = _POS_FLOOR
            lo[m : self.n_mean] = 0.0
            lo[self.n_mean :] = -_RHO_BOUND
            hi[self.n_mean :] = _RHO_BOUND
        return lo, hi

    def default_theta(self) -> np.ndarray:
        if self.family == VARMA:
            return self.pack(gamma=np.zeros(self.n_gamma), omega=np.eye(self.m))
        return self.pack(c0=np.ones(self.m))


def varma_spec(m: int, p: int = 1, q: int = 1, intercept: bool = True, restriction=None, names=None) -> ModelSpec:
    return ModelSpec(VARMA, m, p, q, intercept=intercept, restriction=restriction, names=names)


def mgarch_spec(m: int, p: int = 1, q: int = 1) -> ModelSpec:
    return ModelSpec(MGARCH, m, p, q)


def check_series(X, spec: Optional[ModelSpec] = None, min_length: bool = False) -> np.ndarray:
    """Validate a series and return it as a C-contiguous ``(T, m)`` float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"series must be 1-d or 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("series contains non-finite values")
    if spec is not None:
        if X.shape[1] != spec.m:
            raise ValueError(f"series has {X.shape[1]} columns but the model expects m={spec.m}")
        if min_length and X.shape[0] < spec.m * (spec.p + spec.q) + 10:
            raise ValueError(f"series too short: T={X.shape[0]} < m(p+q)+10")
    return np.ascontiguousarray(X)


def is_valid(spec: ModelSpec, theta) -> bool:
    """Whether ``theta`` satisfies the parameter-point invariants."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.d,) or not np.all(np.isfinite(theta)):
        return False
    lo, hi = spec.bounds()
    if spec.family == VARMA:
        L = spec.unpack(theta)["omega"]
        return bool(np.all(np.diag(L) > 0))
    if np.any(theta[: spec.m] <= 0) or np.any(theta[spec.m : spec.n_mean] < 0):
        return False
    rho = theta[spec.n_mean :]
    if np.any(np.abs(rho) >= 1):
        return False
    return bool(np.all(np.linalg.eigvalsh(spec.unpack(theta)["Omega"]) > 0))


def _raise_status(status: int):
    if status == 1:
        raise NonPositiveVolatility("conditional variance became non-positive")
    if status == 2:
        raise SingularCovariance("innovation covariance is singular or not positive definite")


def _path(spec: ModelSpec, X, theta, t_hi: int, rec_from: int, order: int, exact: bool = True):
    theta = np.ascontiguousarray(theta, dtype=float)
    if theta.shape != (spec.d,):
        raise ValueError(f"theta must have length {spec.d}, got {theta.shape}")
    if spec.family == VARMA:
        da, dA, dB = spec._structure
        ll, g, H, state, st = _rec.varma_path(X, t_hi, rec_from, theta, da, dA, dB, spec.p, spec.q, order, exact)
    else:
        ll, g, H, state, st = _rec.garch_path(X, t_hi, rec_from, theta, spec.p, spec.q, order, exact)
    _raise_status(st)
    return ll, g, H, state


def lanes(spec: ModelSpec, X, tidx, thetas, lookback: int = -1, order: int = 2, exact: bool = False):
    """Evaluate observation ``tidx[i]`` (0-based) at its own parameter ``thetas[i]``."""
    tidx = np.ascontiguousarray(tidx, dtype=np.int64)
    thetas = np.ascontiguousarray(thetas, dtype=float)
    if spec.family == VARMA:
        da, dA, dB = spec._structure
        ll, g, H, st = _rec.varma_lanes(X, tidx, thetas, int(lookback), da, dA, dB, spec.p, spec.q, order, exact)
    else:
        ll, g, H, st = _rec.garch_lanes(X, tidx, thetas, int(lookback), spec.p, spec.q, order, exact)
    _raise_status(st)
    return ll, g, H


def loglik_path(spec: ModelSpec, X, theta, order: int = 0, exact: bool = True):
    """Per-observation log-likelihood (and derivatives) at a fixed parameter for all ``t``.

    Returns ``(ll, grad, hess)`` with shapes ``(T,)``, ``(T, d)``, ``(T, d, d)``
    (the latter two only up to ``order``).
    """
    X = check_series(X, spec)
    ll, g, H, _ = _path(spec, X, theta, X.shape[0] - 1, 0, order, exact)
    return ll, (g if order >= 1 else None), (H if order >= 2 else None)


def _single(spec, X, t, theta, order):
    X = check_series(X, spec)
    T = X.shape[0]
    if not (1 <= t <= T):
        raise ValueError(f"t must be in 1..{T}, got {t}")
    return _path(spec, X, theta, t - 1, t - 1, order)


def loglik_at(spec: ModelSpec, X, t: int, theta) -> float:
    """Quasi log-likelihood contribution of observation ``t`` (1-based) at frozen ``theta``."""
    return float(_single(spec, X, t, theta, 0)[0][0])


def grad_at(spec: ModelSpec, X, t: int, theta) -> np.ndarray:
    return _single(spec, X, t, theta, 1)[1][0].copy()


def hess_at(spec: ModelSpec, X, t: int, theta) -> np.ndarray:
    H = _single(spec, X, t, theta, 2)[2][0]
    return 0.5 * (H + H.T)


def varma_residuals(spec: ModelSpec, X, theta) -> np.ndarray:
    """Residuals ``eta_t(theta)`` of the VARMA recursion, shape ``(T, m)``."""
    if spec.family != VARMA:
        raise ValueError("varma_residuals needs a VARMA spec")
    X = check_series(X, spec)
    return _path(spec, X, theta, X.shape[0] - 1, 0, 0)[3]


def garch_volatility(spec: ModelSpec, X, theta) -> np.ndarray:
    """Conditional variances ``h_t(theta)``, shape ``(T, m)``; zero pre-sample, so ``h_1 = c0``."""
    if spec.family != MGARCH:
        raise ValueError("garch_volatility needs an MGARCH spec")
    X = check_series(X, spec)
    return _path(spec, X, theta, X.shape[0] - 1, 0, 0)[3]


def _companion_radius(mats: np.ndarray) -> float:
    """Spectral radius of the companion matrix of ``z^k - M_1 z^{k-1} - ... - M_k``."""
    mats = np.asarray(mats, dtype=float)
    k = mats.shape[0]
    if k == 0:
        return 0.0
    m = mats.shape[1]
    comp = np.zeros((k * m, k * m))
    comp[:m, :] = np.hstack(list(mats))
    if k > 1:
        comp[m:, :-m] = np.eye((k - 1) * m)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def memory_radius(spec: ModelSpec, theta) -> float:
    """Decay rate of the state recursion (MA part for VARMA, ``D`` part for MGARCH)."""
    blocks = spec.unpack(theta)
    if spec.family == VARMA:
        return _companion_radius(-blocks["B"])
    return _companion_radius(blocks["D"])


def stationarity_report(spec: ModelSpec, theta, warn: bool = True) -> dict:
    """Check the frozen-parameter stationarity conditions.

    VARMA: AR and MA companion spectral radii below one.  MGARCH: spectral
    radius of ``sum C_j + sum D_j`` below one (roots of
    ``|I - sum C_j - sum D_j|`` outside the unit circle).
    """
    blocks = spec.unpack(theta)
    if spec.family == VARMA:
        ar = _companion_radius(blocks["A"])
        ma = _companion_radius(-blocks["B"])
        rep = {"ar_radius": ar, "ma_radius": ma, "ok": ar < 1 and ma < 1}
    else:
        S = blocks["C"].sum(axis=0) + (blocks["D"].sum(axis=0) if spec.q else 0.0)
        rad = float(np.max(np.abs(np.linalg.eigvals(S))))
        rep = {"persistence_radius": rad, "ok": rad < 1}
    if warn and not rep["ok"]:
        warnings.warn(f"parameter outside the stationarity region: {rep}", StationarityWarning, stacklevel=2)
    return rep
