"""Scikit-learn style front end for local linear QMLE."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import models
from .bandwidth import select_bandwidth
from .estimate import fit_curve, sandwich_cov
from .inference import Band, SelectionMatrix, band_from_fit, pointwise_ci
from .models import ModelSpec

__all__ = ["LocalQMLE"]


class LocalQMLE(BaseEstimator):
    """Time-varying VARMA / MGARCH coefficient curves by local linear QMLE.

    Parameters
    ----------
    model : {"varma", "mgarch"} or ModelSpec
        Model family, or a full specification (then ``p``, ``q`` and
        ``intercept`` are ignored).
    p, q : int
        Model orders.
    intercept : bool
        VARMA intercept.
    bandwidth : float or "cv"
        Bandwidth used for the bias-corrected estimate.  ``"cv"`` selects
        ``h_hat`` by leave-one-out cross-validation and uses ``2 h_hat``.
    grid : int or array
        Number of equispaced points on ``[0, 1]``, or the points themselves.
    cv_candidates : sequence of float, optional
        Candidate bandwidths for cross-validation.
    cv_stride : int
        Hold out every ``cv_stride``-th observation in cross-validation.
    n_jobs : int
        Workers for cross-validation.

    Attributes
    ----------
    spec_ : ModelSpec
    h_ : float
    grid_ : ndarray of shape (G,)
    theta_ : ndarray of shape (G, d)
        Bias-corrected curve.
    theta_hat_ : ndarray of shape (G, d)
        Local linear estimate at ``h_``.
    curve_ : CurveFit
    cv_ : CVResult or None
    """

    def __init__(self, model="varma", p: int = 1, q: int = 1, intercept: bool = True, bandwidth=0.3,
                 grid=101, cv_candidates: Optional[Sequence[float]] = None, cv_stride: int = 5, n_jobs: int = 1):
        self.model = model
        self.p = p
        self.q = q
        self.intercept = intercept
        self.bandwidth = bandwidth
        self.grid = grid
        self.cv_candidates = cv_candidates
        self.cv_stride = cv_stride
        self.n_jobs = n_jobs

    def _make_spec(self, m: int) -> ModelSpec:
        if isinstance(self.model, ModelSpec):
            if self.model.m != m:
                raise ValueError(f"series has {m} components, model expects {self.model.m}")
            return self.model
        fam = str(self.model).lower()
        if fam == models.VARMA:
            return models.varma_spec(m, self.p, self.q, intercept=self.intercept)
        if fam == models.MGARCH:
            return models.mgarch_spec(m, self.p, self.q)
        raise ValueError(f"unknown model {self.model!r}")

    def _make_grid(self) -> np.ndarray:
        if np.ndim(self.grid) == 0:
            G = int(self.grid)
            if G < 2:
                raise ValueError("grid needs at least two points")
            return np.linspace(0.0, 1.0, G)
        return np.asarray(self.grid, dtype=float)

    def fit(self, X, y=None):
        """Estimate the curves on the grid from a ``(T, m)`` series."""
        X = check_array(X, ensure_2d=True, dtype=np.float64, ensure_min_samples=2)
        self.spec_ = self._make_spec(X.shape[1])
        X = models.check_series(X, self.spec_, min_length=True)
        self.n_features_in_ = X.shape[1]
        self.n_obs_ = X.shape[0]
        self.cv_ = None
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "cv":
                raise ValueError("bandwidth must be a number or 'cv'")
            self.cv_ = select_bandwidth(self.spec_, X, self.cv_candidates, self.cv_stride, n_jobs=self.n_jobs)
            self.h_ = self.cv_.h_tilde
        else:
            self.h_ = float(self.bandwidth)
        self.grid_ = self._make_grid()
        self.curve_ = fit_curve(self.spec_, X, self.grid_, self.h_)
        self.theta_ = self.curve_.bias_corrected
        self.theta_hat_ = self.curve_.theta_hat
        self._X = X
        self._covs = None
        return self

    @property
    def param_names_(self) -> list[str]:
        check_is_fitted(self, "spec_")
        return list(self.spec_.layout)

    def predict(self, tau):
        """Bias-corrected curve at ``tau`` by linear interpolation over the grid, shape ``(len(tau), d)``."""
        check_is_fitted(self, "theta_")
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any((tau < self.grid_[0]) | (tau > self.grid_[-1])):
            raise ValueError("tau outside the fitted grid")
        return np.column_stack([np.interp(tau, self.grid_, self.theta_[:, j]) for j in range(self.theta_.shape[1])])

    def transform(self, X):
        """Bias-corrected curve at the rescaled times ``t/T`` of ``X``, shape ``(T, d)``."""
        check_is_fitted(self, "theta_")
        X = check_array(X, ensure_2d=True, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} components, estimator was fitted with {self.n_features_in_}")
        T = X.shape[0]
        tau = np.clip(np.arange(1, T + 1) / T, self.grid_[0], self.grid_[-1])
        return self.predict(tau)

    def covariances(self):
        """Sandwich covariance estimates at every grid point (cached)."""
        check_is_fitted(self, "curve_")
        if self._covs is None:
            self._covs = [sandwich_cov(self.spec_, self._X, tau, self.h_, f.theta)
                          for tau, f in zip(self.curve_.grid, self.curve_.fits)]
        return self._covs

    def pointwise_intervals(self, alpha: float = 0.05):
        return pointwise_ci(self.curve_, self.covariances(), alpha, self.n_obs_)

    def confidence_band(self, select=None, alpha: float = 0.05, R: int = 1000, seed=None) -> Band:
        """Simultaneous band for the selected parameters (names, indices or a matrix) over ``[h, 1-h]``."""
        check_is_fitted(self, "curve_")
        d = self.spec_.d
        if select is None:
            C = SelectionMatrix(np.eye(d))
        elif isinstance(select, SelectionMatrix):
            C = select
        elif np.ndim(select) == 2:
            C = SelectionMatrix(select)
        else:
            sel = [select] if isinstance(select, (str, int, np.integer)) else list(select)
            idx = [self.spec_.index(s)[0] if isinstance(s, str) else int(s) for s in sel]
            C = SelectionMatrix.from_indices(d, idx)
        return band_from_fit(self.curve_, self.covariances(), self.n_obs_, C, alpha, R, seed)
