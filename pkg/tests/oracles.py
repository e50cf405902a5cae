"""Plain-loop reference implementations used as test oracles."""

import numpy as np

from tvqmle.kernels import kernel_eval


def varma_loglik(X, a, A, B, omega):
    """Per-observation Gaussian quasi log-likelihood of a VARMA model, zero pre-sample."""
    T, m = X.shape
    p, q = len(A), len(B)
    S = omega @ omega.T
    Si = np.linalg.inv(S)
    _, logdet = np.linalg.slogdet(S)
    eta = np.zeros((T, m))
    ll = np.zeros(T)
    for t in range(T):
        mu = np.array(a, dtype=float).copy()
        for j in range(1, p + 1):
            if t - j >= 0:
                mu += A[j - 1] @ X[t - j]
        for j in range(1, q + 1):
            if t - j >= 0:
                mu += B[j - 1] @ eta[t - j]
        eta[t] = X[t] - mu
        ll[t] = -0.5 * eta[t] @ Si @ eta[t] - 0.5 * logdet
    return ll, eta


def garch_loglik(X, c0, C, D, Om):
    """Per-observation quasi log-likelihood of a constant-correlation GARCH model, zero pre-sample."""
    T, m = X.shape
    p, q = len(C), len(D)
    h = np.zeros((T, m))
    ll = np.zeros(T)
    for t in range(T):
        h[t] = c0
        for j in range(1, p + 1):
            if t - j >= 0:
                h[t] += C[j - 1] @ X[t - j] ** 2
        for j in range(1, q + 1):
            if t - j >= 0:
                h[t] += D[j - 1] @ h[t - j]
        s = np.sqrt(h[t])
        M = Om * np.outer(s, s)
        _, logdet = np.linalg.slogdet(M)
        ll[t] = -0.5 * X[t] @ np.linalg.solve(M, X[t]) - 0.5 * logdet
    return ll, h


def weighted_ls(Y, Z, w):
    """Weighted least squares coefficients ``(Z'WZ)^{-1} Z'WY``."""
    Zw = Z * w[:, None]
    return np.linalg.solve(Zw.T @ Z, Zw.T @ Y)


def simulate_var1(A, T, seed, a=None, burn=200):
    """Gaussian VAR(1) with unit innovations; ``A`` may be a callable of tau."""
    rng = np.random.default_rng(seed)
    m = 2 if callable(A) and np.ndim(A(0.0)) == 2 else (np.shape(A)[0] if np.ndim(A) == 2 else 1)
    Af = A if callable(A) else (lambda tau: A)
    x = np.zeros(m)
    out = np.empty((T, m))
    for s in range(-burn, T):
        tau = max(s + 1, 0) / T
        x = np.atleast_1d(np.asarray(Af(tau)) @ x if m > 1 else np.asarray(Af(tau)) * x) + rng.standard_normal(m)
        if s >= 0:
            out[s] = x
    return out


def local_linear_var_ls(X, tau, h):
    """Closed-form kernel-weighted local linear LS of x_t on [1, x_{t-1}] x [1, u_t]; returns the AR level."""
    T, m = X.shape
    t = np.arange(2, T + 1)
    u = (t / T - tau) / h
    w = kernel_eval(u)
    keep = w > 0
    Z0 = np.hstack([np.ones((T - 1, 1)), X[:-1]])
    Z = np.hstack([Z0, Z0 * u[:, None]])[keep]
    coef = weighted_ls(X[1:][keep], Z, w[keep])
    return coef[1 : 1 + m].T  # rows: equations
