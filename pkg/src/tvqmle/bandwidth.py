"""Leave-one-out cross-validation for the bandwidth.

The criterion for a bandwidth ``h`` is the average held-out quasi
log-likelihood ``1/T sum_t l(x_t, z_{t-1}; theta_{h,-t}(t/T))``, where
``theta_{h,-t}`` is the local fit with observation ``t`` given zero weight.
The bias-corrected estimator is then run at ``h_tilde = 2 h_hat``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .estimate import LocalParams, _shift, fit_local, preliminary_init
from .exceptions import AllCandidatesFailed, TVQMLEError
from .kernels import EPANECHNIKOV, KernelSpec
from .models import ModelSpec, check_series, loglik_at

logger = logging.getLogger(__name__)

__all__ = ["CVResult", "cv_score", "select_bandwidth", "default_candidates"]


def default_candidates() -> np.ndarray:
    """Eight log-spaced values in ``[0.1, 0.45]``."""
    return np.exp(np.linspace(math.log(0.1), math.log(0.45), 8))


@dataclass
class CVResult:
    candidates: np.ndarray
    scores: np.ndarray
    h_hat: float
    n_dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    excluded: list = field(default_factory=list)

    @property
    def h_tilde(self) -> float:
        return 2.0 * self.h_hat


def _cv_indices(T: int, stride: int) -> np.ndarray:
    return np.arange(stride // 2, T, stride) if stride < T else np.array([T // 2])


def _held_out(spec, X, t, h, full_params, kernel):
    """Held-out contribution of 0-based observation ``t``; ``None`` if the fit fails."""
    tau = (t + 1) / X.shape[0]
    try:
        fit = fit_local(spec, X, tau, h, full_params, kernel=kernel, leave_out=t)
        if not fit.converged:
            return None
        val = loglik_at(spec, X, t + 1, fit.theta)
    except (TVQMLEError, FloatingPointError, np.linalg.LinAlgError):
        return None
    return val if np.isfinite(val) else None


def cv_score(spec: ModelSpec, X, h: float, stride: int = 1, kernel: KernelSpec = EPANECHNIKOV,
             n_jobs: int = 1, return_details: bool = False):
    """Leave-one-out cross-validation criterion (larger is better).

    Every ``stride``-th observation is held out.  Full-sample fits are chained
    along the evaluated points and warm-start the leave-one-out fits, which
    run independently.  Points where the held-out fit fails are dropped.

    Returns the score, or ``(score, n_used, n_dropped)`` with ``return_details``.
    """
    X = check_series(X, spec, min_length=True)
    T = X.shape[0]
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not (h >= 2.0 / T):
        raise ValueError(f"bandwidth must be at least 2/T = {2.0 / T:.3g}, got {h}")
    idx = _cv_indices(T, stride)
    taus = (idx + 1) / T
    full = []
    cur: Optional[LocalParams] = None
    prev = None
    for tau in taus:
        if cur is None:
            cur = preliminary_init(spec, X, min(h, 0.5), tau, kernel)[0]
        else:
            cur = _shift(cur, tau - prev, h, h)
        try:
            cur = fit_local(spec, X, tau, h, cur, kernel=kernel).params
        except (TVQMLEError, FloatingPointError, np.linalg.LinAlgError):
            cur = None
        full.append(cur)
        prev = tau
    vals = Parallel(n_jobs=n_jobs)(
        delayed(_held_out)(spec, X, int(t), h, p, kernel) for t, p in zip(idx, full) if p is not None
    )
    used = [v for v in vals if v is not None]
    dropped = len(idx) - len(used)
    score = float(np.mean(used)) if used else float("nan")
    if dropped:
        logger.info("cv h=%.4g: %d of %d held-out fits dropped", h, dropped, len(idx))
    return (score, len(used), dropped) if return_details else score


def select_bandwidth(spec: ModelSpec, X, candidates: Optional[Sequence[float]] = None, stride: int = 1,
                     kernel: KernelSpec = EPANECHNIKOV, n_jobs: int = 1) -> CVResult:
    """Pick the candidate with the largest CV score; ties go to the larger ``h``.

    Candidates with ``2 h >= 0.5`` are excluded before scoring so that the
    bias-corrected bandwidth stays admissible.
    """
    X = check_series(X, spec, min_length=True)
    T = X.shape[0]
    cand = default_candidates() if candidates is None else np.asarray(candidates, dtype=float).ravel()
    if cand.size == 0:
        raise ValueError("need at least one candidate bandwidth")
    if np.any(cand < 2.0 / T) or np.any(cand <= 0):
        raise ValueError(f"every candidate must be at least 2/T = {2.0 / T:.3g}")
    cand = np.unique(cand)
    excluded = [float(c) for c in cand if 2.0 * c >= 0.5]
    cand = cand[2.0 * cand < 0.5]
    if cand.size == 0:
        raise ValueError("every candidate gives 2h >= 0.5")
    res = Parallel(n_jobs=n_jobs)(
        delayed(cv_score)(spec, X, float(h), stride, kernel, 1, True) for h in cand
    )
    scores = np.array([r[0] for r in res])
    dropped = np.array([r[2] for r in res])
    ok = np.isfinite(scores)
    if not ok.any():
        raise AllCandidatesFailed("no candidate bandwidth produced a finite CV score")
    best = np.max(scores[ok])
    h_hat = float(np.max(cand[ok & (scores == best)]))
    return CVResult(cand, scores, h_hat, dropped, excluded)
