"""Compiled residual/volatility recursions with analytic derivatives.

All functions work on 0-based observation indices.  A "lane" is one
observation ``t`` evaluated at its own frozen parameter vector: the
recursion is run from ``s_lo`` to ``t`` with that parameter and only the
contribution at ``t`` is recorded.  ``s_lo = 0`` is the exact truncated
history; ``s_lo > 0`` drops older lags (used with a lookback long enough for
the start-up error to be negligible).

``order``: 0 likelihood only, 1 adds the gradient, 2 adds the Hessian.
``exact``: when False the Hessian omits the terms carrying second
derivatives of the state recursion (they have conditional mean zero at the
truth); the optimizer uses this cheaper matrix.

Status codes: 0 ok, 1 non-positive volatility, 2 singular covariance.
"""

import math

import numpy as np
from numba import njit

# --------------------------------------------------------------------------- VARMA


@njit(cache=True)
def _varma_decode(theta, da, dA, dB, m, p, q):
    nb = da.shape[0]
    a = np.zeros(m)
    A = np.zeros((p, m, m))
    B = np.zeros((q, m, m))
    for k in range(nb):
        th = theta[k]
        if th != 0.0:
            for r in range(m):
                a[r] += th * da[k, r]
            for j in range(p):
                for r in range(m):
                    for c in range(m):
                        A[j, r, c] += th * dA[k, j, r, c]
            for j in range(q):
                for r in range(m):
                    for c in range(m):
                        B[j, r, c] += th * dB[k, j, r, c]
    L = np.zeros((m, m))
    idx = nb
    for c in range(m):
        for r in range(c, m):
            L[r, c] = theta[idx]
            idx += 1
    return a, A, B, L


@njit(cache=True)
def _lower_inverse(L):
    m = L.shape[0]
    Li = np.zeros((m, m))
    for c in range(m):
        Li[c, c] = 1.0 / L[c, c]
        for r in range(c + 1, m):
            acc = 0.0
            for k in range(c, r):
                acc += L[r, k] * Li[k, c]
            Li[r, c] = -acc / L[r, r]
    return Li


@njit(cache=True)
def _varma_terms(eta, G, G2, L, nb, order, exact, g, H):
    """Log-likelihood of one residual vector and its derivatives."""
    m = eta.shape[0]
    Li = _lower_inverse(L)
    e = Li @ eta
    f = Li.T @ e
    ll = 0.0
    for i in range(m):
        ll += -0.5 * e[i] * e[i] - math.log(L[i, i])
    if order == 0:
        return ll
    # vol parameter index -> (a, b)
    nw = m * (m + 1) // 2
    va = np.empty(nw, dtype=np.int64)
    vb = np.empty(nw, dtype=np.int64)
    idx = 0
    for c in range(m):
        for r in range(c, m):
            va[idx] = r
            vb[idx] = c
            idx += 1
    for k in range(nb):
        acc = 0.0
        for i in range(m):
            acc -= f[i] * G[i, k]
        g[k] = acc
    for v in range(nw):
        a = va[v]
        b = vb[v]
        val = f[a] * e[b]
        if a == b:
            val -= 1.0 / L[a, a]
        g[nb + v] = val
    if order < 2:
        return ll
    Mi = Li.T @ Li
    MG = Mi @ G
    LG = Li @ G
    for k in range(nb):
        for l in range(k, nb):
            acc = 0.0
            for i in range(m):
                acc -= G[i, k] * MG[i, l]
            if exact:
                for i in range(m):
                    acc -= f[i] * G2[i, k, l]
            H[k, l] = acc
            H[l, k] = acc
    for k in range(nb):
        for v in range(nw):
            a = va[v]
            b = vb[v]
            val = MG[a, k] * e[b] + f[a] * LG[b, k]
            H[k, nb + v] = val
            H[nb + v, k] = val
    for v in range(nw):
        a = va[v]
        b = vb[v]
        for w in range(v, nw):
            c = va[w]
            d = vb[w]
            val = -Li[d, a] * f[c] * e[b] - Mi[a, c] * e[d] * e[b] - f[a] * Li[b, c] * e[d]
            if a == b and a == c and a == d:
                val += 1.0 / (L[a, a] * L[a, a])
            H[nb + v, nb + w] = val
            H[nb + w, nb + v] = val
    return ll


@njit(cache=True)
def _sparse_structure(dA, dB):
    """Nonzero entries ``(k, j, r, c)`` and values of the AR and MA derivative blocks."""
    nb, p, m, _ = dA.shape
    q = dB.shape[1]
    nA = 0
    nB = 0
    for k in range(nb):
        for r in range(m):
            for c in range(m):
                for j in range(p):
                    if dA[k, j, r, c] != 0.0:
                        nA += 1
                for j in range(q):
                    if dB[k, j, r, c] != 0.0:
                        nB += 1
    iA = np.zeros((nA, 4), dtype=np.int64)
    vA = np.zeros(nA)
    iB = np.zeros((nB, 4), dtype=np.int64)
    vB = np.zeros(nB)
    nA = 0
    nB = 0
    for k in range(nb):
        for r in range(m):
            for c in range(m):
                for j in range(p):
                    if dA[k, j, r, c] != 0.0:
                        iA[nA, 0] = k
                        iA[nA, 1] = j + 1
                        iA[nA, 2] = r
                        iA[nA, 3] = c
                        vA[nA] = dA[k, j, r, c]
                        nA += 1
                for j in range(q):
                    if dB[k, j, r, c] != 0.0:
                        iB[nB, 0] = k
                        iB[nB, 1] = j + 1
                        iB[nB, 2] = r
                        iB[nB, 3] = c
                        vB[nB] = dB[k, j, r, c]
                        nB += 1
    return iA, vA, iB, vB


@njit(cache=True)
def _varma_run(x, s_lo, t_hi, rec_from, theta, da, dA, dB, iA, vA, iB, vB, p, q, order, exact,
               out_ll, out_g, out_H, out_eta):
    """Run the residual recursion over ``s_lo..t_hi``; record terms for ``s >= rec_from``."""
    T, m = x.shape
    nb = da.shape[0]
    a, A, B, L = _varma_decode(theta, da, dA, dB, m, p, q)
    for i in range(m):
        if not (L[i, i] > 0.0):
            return 2
    # ring buffers of length q + 1 so the current slot never aliases a lag
    Q = q + 1
    eta_buf = np.zeros((Q, m))
    need_g = order >= 1
    need_g2 = order >= 2 and exact
    G_buf = np.zeros((Q, m, nb)) if need_g else np.zeros((1, 1, 1))
    G2_buf = np.zeros((Q, m, nb, nb)) if need_g2 else np.zeros((1, 1, 1, 1))
    G2_dummy = np.zeros((m, nb, nb))
    G_dummy = np.zeros((m, nb))
    nA = iA.shape[0]
    nB = iB.shape[0]
    for s in range(s_lo, t_hi + 1):
        slot = s % Q
        eta = eta_buf[slot]
        for r in range(m):
            eta[r] = x[s, r] - a[r]
        for j in range(1, p + 1):
            if s - j >= 0:
                for r in range(m):
                    acc = 0.0
                    for c in range(m):
                        acc += A[j - 1, r, c] * x[s - j, c]
                    eta[r] -= acc
        for j in range(1, q + 1):
            if s - j >= s_lo:
                el = eta_buf[(s - j) % Q]
                for r in range(m):
                    acc = 0.0
                    for c in range(m):
                        acc += B[j - 1, r, c] * el[c]
                    eta[r] -= acc
        if need_g:
            G = G_buf[slot]
            for r in range(m):
                for k in range(nb):
                    G[r, k] = -da[k, r]
            for e in range(nA):
                j = iA[e, 1]
                if s - j >= 0:
                    G[iA[e, 2], iA[e, 0]] -= vA[e] * x[s - j, iA[e, 3]]
            for e in range(nB):
                j = iB[e, 1]
                if s - j >= s_lo:
                    G[iB[e, 2], iB[e, 0]] -= vB[e] * eta_buf[(s - j) % Q, iB[e, 3]]
            for j in range(1, q + 1):
                if s - j >= s_lo:
                    Gl = G_buf[(s - j) % Q]
                    for r in range(m):
                        for c in range(m):
                            b = B[j - 1, r, c]
                            if b != 0.0:
                                for k in range(nb):
                                    G[r, k] -= b * Gl[c, k]
            if need_g2:
                G2 = G2_buf[slot]
                G2[:, :, :] = 0.0
                for e in range(nB):
                    j = iB[e, 1]
                    if s - j >= s_lo:
                        Gl = G_buf[(s - j) % Q]
                        k = iB[e, 0]
                        r = iB[e, 2]
                        c = iB[e, 3]
                        v = vB[e]
                        for l in range(nb):
                            G2[r, k, l] -= v * Gl[c, l]
                            G2[r, l, k] -= v * Gl[c, l]
                for j in range(1, q + 1):
                    if s - j >= s_lo:
                        G2l = G2_buf[(s - j) % Q]
                        for r in range(m):
                            for c in range(m):
                                b = B[j - 1, r, c]
                                if b != 0.0:
                                    for k in range(nb):
                                        for l in range(nb):
                                            G2[r, k, l] -= b * G2l[c, k, l]
        if s >= rec_from:
            i = s - rec_from
            if out_eta.shape[0] > 0:
                out_eta[i] = eta
            if order == 0:
                out_ll[i] = _varma_terms(eta, G_dummy, G2_dummy, L, nb, 0, False, out_g[0], out_H[0])
            elif order == 1:
                out_ll[i] = _varma_terms(eta, G_buf[slot], G2_dummy, L, nb, 1, False, out_g[i], out_H[0])
            else:
                G2s = G2_buf[slot] if need_g2 else G2_dummy
                out_ll[i] = _varma_terms(eta, G_buf[slot], G2s, L, nb, 2, exact, out_g[i], out_H[i])
    return 0


@njit(cache=True)
def varma_lanes(x, tidx, thetas, lookback, da, dA, dB, p, q, order, exact):
    W = tidx.shape[0]
    d = thetas.shape[1]
    ll = np.zeros(W)
    g = np.zeros((W, d)) if order >= 1 else np.zeros((1, d))
    H = np.zeros((W, d, d)) if order >= 2 else np.zeros((1, d, d))
    no_eta = np.zeros((0, x.shape[1]))
    iA, vA, iB, vB = _sparse_structure(dA, dB)
    status = 0
    for i in range(W):
        t = tidx[i]
        s_lo = 0 if lookback < 0 else max(0, t - lookback)
        gi = g[i : i + 1] if order >= 1 else g
        Hi = H[i : i + 1] if order >= 2 else H
        st = _varma_run(x, s_lo, t, t, thetas[i], da, dA, dB, iA, vA, iB, vB, p, q, order, exact, ll[i : i + 1], gi, Hi, no_eta)
        if st != 0:
            status = st
            break
    return ll, g, H, status


@njit(cache=True)
def varma_path(x, t_hi, rec_from, theta, da, dA, dB, p, q, order, exact):
    m = x.shape[1]
    d = theta.shape[0]
    n = t_hi - rec_from + 1
    ll = np.zeros(n)
    g = np.zeros((n, d)) if order >= 1 else np.zeros((1, d))
    H = np.zeros((n, d, d)) if order >= 2 else np.zeros((1, d, d))
    eta = np.zeros((n, m))
    iA, vA, iB, vB = _sparse_structure(dA, dB)
    st = _varma_run(x, 0, t_hi, rec_from, theta, da, dA, dB, iA, vA, iB, vB, p, q, order, exact, ll, g, H, eta)
    return ll, g, H, eta, st


# --------------------------------------------------------------------------- GARCH


@njit(cache=True)
def _small_cholesky(S):
    m = S.shape[0]
    L = np.zeros((m, m))
    for j in range(m):
        acc = S[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if not (acc > 1e-300):
            return L, False
        L[j, j] = math.sqrt(acc)
        for i in range(j + 1, m):
            acc2 = S[i, j]
            for k in range(j):
                acc2 -= L[i, k] * L[j, k]
            L[i, j] = acc2 / L[j, j]
    return L, True


@njit(cache=True)
def _garch_decode(theta, m, p, q):
    mm = m * m
    c0 = theta[:m].copy()
    C = np.zeros((p, m, m))
    D = np.zeros((q, m, m))
    off = m
    for j in range(p):
        for b in range(m):
            for a in range(m):
                C[j, a, b] = theta[off + j * mm + b * m + a]
    off = m + p * mm
    for j in range(q):
        for b in range(m):
            for a in range(m):
                D[j, a, b] = theta[off + j * mm + b * m + a]
    off = m + (p + q) * mm
    Om = np.eye(m)
    idx = off
    for c in range(m):
        for r in range(c + 1, m):
            Om[r, c] = theta[idx]
            Om[c, r] = theta[idx]
            idx += 1
    return c0, C, D, Om


@njit(cache=True)
def _garch_terms(xt, h, DH, D2H, P, logdetO, nh, order, exact, g, H):
    m = xt.shape[0]
    y = np.empty(m)
    for i in range(m):
        y[i] = xt[i] / math.sqrt(h[i])
    z = P @ y
    ll = -0.5 * logdetO
    for i in range(m):
        ll += -0.5 * y[i] * z[i] - 0.5 * math.log(h[i])
    if order == 0:
        return ll
    nr = m * (m - 1) // 2
    ra = np.empty(nr, dtype=np.int64)
    rb = np.empty(nr, dtype=np.int64)
    idx = 0
    for c in range(m):
        for r in range(c + 1, m):
            ra[idx] = r
            rb[idx] = c
            idx += 1
    gh = np.empty(m)
    for i in range(m):
        gh[i] = (z[i] * y[i] - 1.0) / (2.0 * h[i])
    for k in range(nh):
        acc = 0.0
        for i in range(m):
            acc += gh[i] * DH[i, k]
        g[k] = acc
    for r in range(nr):
        a = ra[r]
        b = rb[r]
        g[nh + r] = z[a] * z[b] - P[a, b]
    if order < 2:
        return ll
    Hin = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            Hin[i, j] = -0.25 * P[i, j] * y[i] * y[j] / (h[i] * h[j])
        Hin[i, i] += (0.5 - 0.75 * z[i] * y[i]) / (h[i] * h[i])
    HD = Hin @ DH
    for k in range(nh):
        for l in range(k, nh):
            acc = 0.0
            for i in range(m):
                acc += DH[i, k] * HD[i, l]
            if exact:
                for i in range(m):
                    acc += gh[i] * D2H[i, k, l]
            H[k, l] = acc
            H[l, k] = acc
    for r in range(nr):
        a = ra[r]
        b = rb[r]
        for k in range(nh):
            acc = 0.0
            for i in range(m):
                cr = -0.5 * (y[i] / h[i]) * (P[a, i] * z[b] + z[a] * P[b, i])
                acc += cr * DH[i, k]
            H[k, nh + r] = acc
            H[nh + r, k] = acc
        for s in range(r, nr):
            c = ra[s]
            d = rb[s]
            val = (
                -(P[a, c] * z[d] + P[a, d] * z[c]) * z[b]
                - z[a] * (P[b, c] * z[d] + P[b, d] * z[c])
                + P[a, c] * P[d, b]
                + P[a, d] * P[c, b]
            )
            H[nh + r, nh + s] = val
            H[nh + s, nh + r] = val
    return ll


@njit(cache=True)
def _garch_run(x, s_lo, t_hi, rec_from, theta, p, q, order, exact, out_ll, out_g, out_H, out_h):
    T, m = x.shape
    mm = m * m
    nh = m + (p + q) * mm
    c0, C, D, Om = _garch_decode(theta, m, p, q)
    for i in range(m):
        if not (c0[i] > 0.0):
            return 1
    Lo, ok = _small_cholesky(Om)
    if not ok:
        return 2
    Loi = _lower_inverse(Lo)
    P = Loi.T @ Loi
    logdetO = 0.0
    for i in range(m):
        logdetO += 2.0 * math.log(Lo[i, i])
    Q = q + 1
    h_buf = np.zeros((Q, m))
    need_g = order >= 1
    need_g2 = order >= 2 and exact
    DH_buf = np.zeros((Q, m, nh)) if need_g else np.zeros((1, 1, 1))
    D2H_buf = np.zeros((Q, m, nh, nh)) if need_g2 else np.zeros((1, 1, 1, 1))
    DH_pre = np.zeros((m, nh))
    for i in range(m):
        DH_pre[i, i] = 1.0
    D2H_zero = np.zeros((m, nh, nh))
    offC = m
    offD = m + p * mm
    for s in range(s_lo, t_hi + 1):
        slot = s % Q
        h = h_buf[slot]
        for r in range(m):
            h[r] = c0[r]
        for j in range(1, p + 1):
            if s - j >= 0:
                xl = x[s - j]
                for r in range(m):
                    acc = 0.0
                    for c in range(m):
                        acc += C[j - 1, r, c] * xl[c] * xl[c]
                    h[r] += acc
        for j in range(1, q + 1):
            if s - j < 0:
                continue  # zero-padded pre-sample
            hl = h_buf[(s - j) % Q] if s - j >= s_lo else c0
            for r in range(m):
                acc = 0.0
                for c in range(m):
                    acc += D[j - 1, r, c] * hl[c]
                h[r] += acc
        for r in range(m):
            if not (h[r] > 0.0):
                return 1
        if need_g:
            DH = DH_buf[slot]
            DH[:, :] = 0.0
            for i in range(m):
                DH[i, i] = 1.0
            for j in range(1, p + 1):
                if s - j >= 0:
                    xl = x[s - j]
                    base = offC + (j - 1) * mm
                    for b in range(m):
                        x2 = xl[b] * xl[b]
                        for a in range(m):
                            DH[a, base + b * m + a] += x2
            for j in range(1, q + 1):
                if s - j < 0:
                    continue
                if s - j >= s_lo:
                    hl = h_buf[(s - j) % Q]
                    DHl = DH_buf[(s - j) % Q]
                else:
                    hl = c0
                    DHl = DH_pre
                base = offD + (j - 1) * mm
                for b in range(m):
                    for a in range(m):
                        DH[a, base + b * m + a] += hl[b]
                for r in range(m):
                    for c in range(m):
                        dv = D[j - 1, r, c]
                        if dv != 0.0:
                            for k in range(nh):
                                DH[r, k] += dv * DHl[c, k]
            if need_g2:
                D2H = D2H_buf[slot]
                D2H[:, :, :] = 0.0
                for j in range(1, q + 1):
                    if s - j < 0:
                        continue
                    if s - j >= s_lo:
                        DHl = DH_buf[(s - j) % Q]
                        D2Hl = D2H_buf[(s - j) % Q]
                    else:
                        DHl = DH_pre
                        D2Hl = D2H_zero
                    base = offD + (j - 1) * mm
                    # d/dD_j[a,b] of D_j h_{s-j}: e_a * DH_{s-j}[b, :]
                    for b in range(m):
                        for a in range(m):
                            kk = base + b * m + a
                            for l in range(nh):
                                D2H[a, kk, l] += DHl[b, l]
                                D2H[a, l, kk] += DHl[b, l]
                    for r in range(m):
                        for c in range(m):
                            dv = D[j - 1, r, c]
                            if dv != 0.0:
                                for k in range(nh):
                                    for l in range(nh):
                                        D2H[r, k, l] += dv * D2Hl[c, k, l]
        if s >= rec_from:
            i = s - rec_from
            if out_h.shape[0] > 0:
                out_h[i] = h
            if order == 0:
                out_ll[i] = _garch_terms(x[s], h, DH_pre, D2H_zero, P, logdetO, nh, 0, False, out_g[0], out_H[0])
            elif order == 1:
                out_ll[i] = _garch_terms(x[s], h, DH_buf[slot], D2H_zero, P, logdetO, nh, 1, False, out_g[i], out_H[0])
            else:
                D2s = D2H_buf[slot] if need_g2 else D2H_zero
                out_ll[i] = _garch_terms(x[s], h, DH_buf[slot], D2s, P, logdetO, nh, 2, exact, out_g[i], out_H[i])
    return 0


@njit(cache=True)
def garch_lanes(x, tidx, thetas, lookback, p, q, order, exact):
    W = tidx.shape[0]
    d = thetas.shape[1]
    ll = np.zeros(W)
    g = np.zeros((W, d)) if order >= 1 else np.zeros((1, d))
    H = np.zeros((W, d, d)) if order >= 2 else np.zeros((1, d, d))
    no_h = np.zeros((0, x.shape[1]))
    status = 0
    for i in range(W):
        t = tidx[i]
        s_lo = 0 if lookback < 0 else max(0, t - lookback)
        gi = g[i : i + 1] if order >= 1 else g
        Hi = H[i : i + 1] if order >= 2 else H
        st = _garch_run(x, s_lo, t, t, thetas[i], p, q, order, exact, ll[i : i + 1], gi, Hi, no_h)
        if st != 0:
            status = st
            break
    return ll, g, H, status


@njit(cache=True)
def garch_path(x, t_hi, rec_from, theta, p, q, order, exact):
    m = x.shape[1]
    d = theta.shape[0]
    n = t_hi - rec_from + 1
    ll = np.zeros(n)
    g = np.zeros((n, d)) if order >= 1 else np.zeros((1, d))
    H = np.zeros((n, d, d)) if order >= 2 else np.zeros((1, d, d))
    hh = np.zeros((n, m))
    st = _garch_run(x, 0, t_hi, rec_from, theta, p, q, order, exact, ll, g, H, hh)
    return ll, g, H, hh, st
