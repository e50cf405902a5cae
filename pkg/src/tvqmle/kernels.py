"""Kernel functions, kernel moments and local linear weights.

Only the Epanechnikov kernel ``K(u) = 0.75 (1 - u^2)`` on ``[-1, 1]`` has
closed-form moments; any other registered shape falls back to adaptive
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .exceptions import DegenerateDesign

__all__ = [
    "KernelSpec",
    "EPANECHNIKOV",
    "LocalLinearWeights",
    "kernel_eval",
    "kernel_derivative",
    "kernel_moment",
    "fourth_order_kernel",
    "fourth_order_moment",
    "boundary_moments",
    "local_linear_weights",
    "weight_matrix",
    "check_bandwidth",
]


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _epanechnikov_prime(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, -1.5 * u, 0.0)


_SHAPES: dict[str, tuple[Callable, Callable]] = {
    "epanechnikov": (_epanechnikov, _epanechnikov_prime),
}


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric kernel supported on ``[-1, 1]``."""

    shape: str = "epanechnikov"

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}; known: {sorted(_SHAPES)}")

    @property
    def support(self) -> tuple[float, float]:
        return (-1.0, 1.0)

    def __call__(self, u):
        return _SHAPES[self.shape][0](u)


EPANECHNIKOV = KernelSpec("epanechnikov")


def kernel_eval(u, spec: KernelSpec = EPANECHNIKOV):
    """Evaluate ``K(u)``; zero outside ``[-1, 1]``. Scalars in, floats out."""
    out = spec(u)
    return float(out) if np.ndim(out) == 0 else out


def kernel_derivative(u, spec: KernelSpec = EPANECHNIKOV):
    out = _SHAPES[spec.shape][1](u)
    return float(out) if np.ndim(out) == 0 else out


def _quad(f, lo, hi, points=None):
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200, points=points)
    return val


def _epa_partial_moment(k: int, lo: float, hi: float) -> float:
    # int_lo^hi u^k 0.75 (1 - u^2) du
    return 0.75 * ((hi ** (k + 1) - lo ** (k + 1)) / (k + 1) - (hi ** (k + 3) - lo ** (k + 3)) / (k + 3))


def _epa_partial_sq_moment(k: int, lo: float, hi: float) -> float:
    # int_lo^hi u^k 0.5625 (1 - u^2)^2 du
    def p(e):
        return (hi**e - lo**e) / e

    return 0.5625 * (p(k + 1) - 2.0 * p(k + 3) + p(k + 5))


@lru_cache(maxsize=256)
def kernel_moment(k: int, squared: bool = False, spec: KernelSpec = EPANECHNIKOV) -> float:
    """Return ``c_k = int u^k K(u) du`` or, with ``squared=True``, ``v_k = int u^k K(u)^2 du``."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    if spec.shape == "epanechnikov":
        if squared:
            return _epa_partial_sq_moment(k, -1.0, 1.0)
        return _epa_partial_moment(k, -1.0, 1.0)
    if squared:
        return _quad(lambda u: u**k * spec(u) ** 2, -1.0, 1.0)
    return _quad(lambda u: u**k * spec(u), -1.0, 1.0)


def fourth_order_kernel(u, spec: KernelSpec = EPANECHNIKOV):
    """Jackknife kernel ``2 sqrt(2) K(sqrt(2) u) - K(u)`` implied by the h, h/sqrt(2) combination."""
    u = np.asarray(u, dtype=float)
    out = 2.0 * np.sqrt(2.0) * spec(np.sqrt(2.0) * u) - spec(u)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def fourth_order_moment(k: int, squared: bool = False, spec: KernelSpec = EPANECHNIKOV) -> float:
    """Moments of the jackknife kernel by quadrature (``squared=True`` gives ``v0`` for k=0)."""
    r = 1.0 / np.sqrt(2.0)
    if squared:
        f = lambda u: u**k * fourth_order_kernel(u, spec) ** 2  # noqa: E731
    else:
        f = lambda u: u**k * fourth_order_kernel(u, spec)  # noqa: E731
    return _quad(f, -1.0, -r) + _quad(f, -r, r) + _quad(f, r, 1.0)


def check_bandwidth(h: float) -> float:
    h = float(h)
    if not (0.0 < h < 0.5):
        raise ValueError(f"bandwidth must satisfy 0 < h < 0.5, got {h}")
    return h


def boundary_moments(tau: float, h: float, k_max: int = 3, spec: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """Truncated moments ``int_{-tau/h}^{(1-tau)/h} u^k K(u) du`` for ``k = 0..k_max``.

    The limits are clipped to the kernel support.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    lo = max(-1.0, -tau / h)
    hi = min(1.0, (1.0 - tau) / h)
    if spec.shape == "epanechnikov":
        return np.array([_epa_partial_moment(k, lo, hi) for k in range(k_max + 1)])
    return np.array([_quad(lambda u, k=k: u**k * spec(u), lo, hi) for k in range(k_max + 1)])


@dataclass(frozen=True)
class LocalLinearWeights:
    """Equivalent-kernel weights of the local linear smoother at one point."""

    tau: float
    h: float
    boundary_moments: np.ndarray
    weights: np.ndarray
    bias_factor: float


def local_linear_weights(tau: float, h: float, T: int, spec: KernelSpec = EPANECHNIKOV) -> LocalLinearWeights:
    """Weights ``omega_{t,h}(tau)``, ``t = 1..T``, and bias factor ``b_h(tau)``.

    Raises
    ------
    DegenerateDesign
        If fewer than two distinct design points carry kernel mass, i.e. the
        discrete local linear design is singular.
    """
    c = boundary_moments(tau, h, 3, spec)
    den = c[0] * c[2] - c[1] ** 2
    grid = np.arange(1, T + 1) / T
    u = (grid - tau) / h
    kh = spec(u) / h
    s = [np.sum(kh * u**k) / T for k in range(3)]
    if den <= 1e-12 or s[0] * s[2] - s[1] ** 2 <= 1e-12:
        raise DegenerateDesign(f"local linear design singular at tau={tau}, h={h}, T={T}")
    w = kh * (c[2] - u * c[1]) / den
    b = (c[2] ** 2 - c[1] * c[3]) / den
    return LocalLinearWeights(tau=float(tau), h=float(h), boundary_moments=c, weights=w, bias_factor=float(b))


def weight_matrix(grid, h: float, T: int, spec: KernelSpec = EPANECHNIKOV) -> np.ndarray:
    """Stack ``omega_{t,h}(tau)`` for every ``tau`` in ``grid`` into a ``(G, T)`` array."""
    return np.vstack([local_linear_weights(t, h, T, spec).weights for t in np.atleast_1d(grid)])
