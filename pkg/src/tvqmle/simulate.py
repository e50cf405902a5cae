"""Simulation of locally stationary VARMA / MGARCH processes and coverage studies.

A :class:`DgpSpec` pairs an estimation :class:`~tvqmle.models.ModelSpec` with
a curve ``theta(tau)`` in that spec's layout.  Paths start from zero and run
``burn_in`` steps at the frozen parameter ``theta(0)`` before the observed
stretch ``t = 1..T`` at ``theta(t/T)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .estimate import fit_curve, sandwich_cov
from .exceptions import ExplosivePath, TVQMLEError
from .inference import SelectionMatrix, band_from_fit, bootstrap_quantile, combined_weights, interior_grid
from .kernels import check_bandwidth
from .models import MGARCH, VARMA, ModelSpec, varma_spec, mgarch_spec

__all__ = [
    "DgpSpec",
    "CoverageReport",
    "dgp1",
    "dgp2",
    "get_dgp",
    "simulate_dgp",
    "stationary_approx",
    "coupled_discrepancy",
    "coverage_study",
]

EXPLOSION = 1e8


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Data generating process.

    Parameters
    ----------
    model : ModelSpec
        Layout of ``theta``; also the specification used for estimation.
    curve : callable
        ``tau -> theta(tau)`` as a ``(d,)`` array.
    groups : dict, optional
        Coefficient groups for coverage reports, mapping a label to parameter names.
    burn_in : int
        Pre-sample steps run at ``theta(0)``.
    """

    model: ModelSpec
    curve: Callable[[float], np.ndarray]
    groups: dict = field(default_factory=dict)
    burn_in: int = 500
    name: str = "custom"

    @property
    def family(self) -> str:
        return self.model.family

    @property
    def m(self) -> int:
        return self.model.m

    def theta(self, tau) -> np.ndarray:
        """``theta`` at each point of ``tau``, shape ``(len(tau), d)`` (or ``(d,)`` for a scalar)."""
        if np.ndim(tau) == 0:
            return np.asarray(self.curve(float(tau)), dtype=float)
        return np.array([self.curve(float(t)) for t in np.asarray(tau)])


# --------------------------------------------------------------------------- built-ins


def _dgp1_restriction() -> np.ndarray:
    # gamma = (a1, a2, B1_11, B1_21, B1_12, B1_22) -> vec(A1, A2, B1)
    R = np.zeros((12, 6))
    R[[0, 3], 0] = 1.0
    R[[4, 7], 1] = 1.0
    R[8:12, 2:6] = np.eye(4)
    return R


def _dgp1_curve(tau: float) -> np.ndarray:
    e = math.exp(tau - 1.0)
    a1, a2 = 0.6 * e, -0.3 * e
    off = -0.8 * (tau - 0.5) ** 2
    b11 = 0.5 * math.exp(tau - 0.5)
    b22 = 0.5 + 0.3 * math.sin(math.pi * tau)
    g = math.exp(0.5 - tau)
    w11 = 1.5 + 0.2 * g
    w21 = 0.2 * g
    w22 = 1.5 + 0.5 * (tau - 0.5) ** 2
    return np.array([a1, a2, b11, off, off, b22, w11, w21, w22])


def dgp1(burn_in: int = 500) -> DgpSpec:
    """Bivariate VARMA(2,1) with scalar AR matrices ``a_j(tau) I`` and a full ``B_1(tau)``."""
    names = ["a1", "a2", "B1_11", "B1_21", "B1_12", "B1_22"]
    model = varma_spec(2, 2, 1, intercept=False, restriction=_dgp1_restriction(), names=names)
    groups = {
        "alpha1": ["a1"],
        "alpha2": ["a2"],
        "B1": ["B1_11", "B1_21", "B1_12", "B1_22"],
        "Omega": ["omega_11", "omega_21", "omega_22"],
    }
    return DgpSpec(model, _dgp1_curve, groups, burn_in, "dgp1")


def _dgp2_curve(tau: float) -> np.ndarray:
    c0 = [2.0 * math.exp(0.5 * tau - 0.5), 3.0 + 0.2 * math.cos(tau)]
    off = 0.05 * (tau - 0.5) ** 2
    C1 = [0.4 + 0.05 * math.cos(tau), off, off, 0.4 + 0.05 * math.sin(tau)]  # column-major
    D1 = [0.4 - 0.1 * math.cos(tau), 0.0, 0.0, 0.3 - 0.1 * math.sin(tau)]
    rho = [0.3 * math.sin(tau)]
    return np.array(c0 + C1 + D1 + rho)


def dgp2(burn_in: int = 500) -> DgpSpec:
    """Bivariate constant-correlation GARCH(1,1) with diagonal ``D_1(tau)``."""
    model = mgarch_spec(2, 1, 1)
    groups = {
        "c0": ["c0_1", "c0_2"],
        "C1": ["C1_11", "C1_21", "C1_12", "C1_22"],
        "D1": ["D1_11", "D1_21", "D1_12", "D1_22"],
        "Omega": ["rho_21"],
    }
    return DgpSpec(model, _dgp2_curve, groups, burn_in, "dgp2")


def get_dgp(name: str, burn_in: int = 500) -> DgpSpec:
    table = {"dgp1": dgp1, "dgp2": dgp2}
    try:
        return table[name.lower()](burn_in)
    except KeyError:
        raise ValueError(f"unknown DGP {name!r}; known: {sorted(table)}") from None


# --------------------------------------------------------------------------- simulation


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(seed))


def _draw(spec: DgpSpec, T: int, seed, min_length: int = 50) -> np.ndarray:
    """Innovations ``eps`` for burn-in and sample, shape ``(burn_in + T, m)``."""
    if T < min_length:
        raise ValueError(f"T must be at least {min_length}, got {T}")
    return _rng(seed).standard_normal((spec.burn_in + T, spec.m))


def _blocks(model: ModelSpec, thetas: np.ndarray) -> dict:
    """Stack :meth:`ModelSpec.unpack` over rows of ``thetas``."""
    parts = [model.unpack(th) for th in thetas]
    return {k: np.array([p[k] for p in parts]) for k in parts[0]}


def _sym_root(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(S)
    return np.einsum("...ij,...j,...kj->...ik", V, np.sqrt(np.clip(lam, 0.0, None)), V)


def _mv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``M v`` for ``M`` of shape ``(m, m)`` or ``(lanes, m, m)`` and ``v`` of shape ``(m,)`` or ``(lanes, m)``.

    Summed column by column in a fixed order so that a single parameter set
    and per-lane parameter sets give bit-identical paths.
    """
    out = M[..., :, 0] * v[..., 0, None]
    for c in range(1, M.shape[-1]):
        out = out + M[..., :, c] * v[..., c, None]
    return out


def _run(model: ModelSpec, blk: dict, eps: np.ndarray, step_param: Callable[[int], int], n_lanes: int,
         record: Callable[[int], Optional[np.ndarray]]) -> None:
    """Generic lane-vectorised recursion.

    ``blk`` holds parameter blocks indexed by parameter set; ``step_param(s)``
    maps a time step to the parameter set used by every lane (or ``-1`` for
    one parameter set per lane).  ``record(s, x)`` stores outputs.
    """
    m, p, q = model.m, model.p, model.q
    n = eps.shape[0]
    if model.family == VARMA:
        xs = np.zeros((p + 1, n_lanes, m))
        es = np.zeros((q + 1, n_lanes, m))
        for s in range(n):
            k = step_param(s)
            sl = slice(None) if k < 0 else k
            a, A, B, L = blk["a"][sl], blk["A"][sl], blk["B"][sl], blk["omega"][sl]
            e = np.broadcast_to(_mv(L, eps[s]), (n_lanes, m))
            x = np.broadcast_to(a, (n_lanes, m)) + e
            for j in range(1, p + 1):
                x = x + _mv(A[j - 1] if k >= 0 else A[:, j - 1], xs[-j])
            for j in range(1, q + 1):
                x = x + _mv(B[j - 1] if k >= 0 else B[:, j - 1], es[-j])
            if not np.all(np.abs(x) < EXPLOSION):
                raise ExplosivePath(f"simulated path exceeded {EXPLOSION:g} at step {s}")
            xs = np.concatenate([xs[1:], x[None]])
            es = np.concatenate([es[1:], e[None]])
            record(s, x)
    else:
        root = blk["_root"]
        xs = np.zeros((p + 1, n_lanes, m))
        hs = np.zeros((q + 1, n_lanes, m))
        for s in range(n):
            k = step_param(s)
            sl = slice(None) if k < 0 else k
            c0, C, D, Rt = blk["c0"][sl], blk["C"][sl], blk["D"][sl], root[sl]
            hcur = np.broadcast_to(c0, (n_lanes, m))
            for j in range(1, p + 1):
                hcur = hcur + _mv(C[j - 1] if k >= 0 else C[:, j - 1], xs[-j] ** 2)
            for j in range(1, q + 1):
                hcur = hcur + _mv(D[j - 1] if k >= 0 else D[:, j - 1], hs[-j])
            eta = _mv(Rt, eps[s])
            x = np.sqrt(hcur) * eta
            if not np.all(np.abs(x) < EXPLOSION) or not np.all(hcur < EXPLOSION**2):
                raise ExplosivePath(f"simulated path exceeded {EXPLOSION:g} at step {s}")
            xs = np.concatenate([xs[1:], x[None]])
            hs = np.concatenate([hs[1:], hcur[None]])
            record(s, x)


def _param_blocks(spec: DgpSpec, taus: np.ndarray) -> dict:
    blk = _blocks(spec.model, spec.theta(taus))
    if spec.family == MGARCH:
        blk["_root"] = _sym_root(blk["Omega"])
    return blk


def simulate_dgp(spec: DgpSpec, T: int, seed=None, min_length: int = 50) -> np.ndarray:
    """Simulate ``x_1..x_T`` (shape ``(T, m)``) from a locally stationary DGP.

    The first ``burn_in`` innovations drive the pre-sample at ``theta(0)``.
    ``min_length`` guards against samples too short to estimate from; the
    command line lowers it to 1 for quick exports.
    """
    eps = _draw(spec, T, seed, min_length)
    B = spec.burn_in
    taus = np.concatenate([[0.0], np.arange(1, T + 1) / T])
    blk = _param_blocks(spec, taus)
    out = np.empty((T, spec.m))

    def rec(s, x):
        if s >= B:
            out[s - B] = x[0]

    _run(spec.model, blk, eps, lambda s: 0 if s < B else s - B + 1, 1, rec)
    return out


def stationary_approx(spec: DgpSpec, tau, T: int, seed=None) -> np.ndarray:
    """Frozen-``tau`` process driven by the same innovations as ``simulate_dgp(spec, T, seed)``.

    With scalar ``tau`` returns the ``(T, m)`` path ``x~_t(tau)``.  With an
    array of ``T`` values returns ``x~_t(tau_t)`` for each ``t``; pass
    ``tau="diagonal"`` for ``tau_t = t/T``.
    """
    eps = _draw(spec, T, seed)
    B = spec.burn_in
    if isinstance(tau, str):
        if tau != "diagonal":
            raise ValueError("tau must be a number, an array of length T or 'diagonal'")
        tau = np.arange(1, T + 1) / T
    if np.ndim(tau) == 0:
        blk = _param_blocks(spec, np.array([float(tau)]))
        out = np.empty((T, spec.m))

        def rec(s, x):
            if s >= B:
                out[s - B] = x[0]

        _run(spec.model, blk, eps, lambda s: 0, 1, rec)
        return out
    taus = np.asarray(tau, dtype=float)
    if taus.shape != (T,):
        raise ValueError("tau array must have length T")
    blk = _param_blocks(spec, taus)
    out = np.empty((T, spec.m))

    def rec_diag(s, x):
        if s >= B:
            out[s - B] = x[s - B]

    _run(spec.model, blk, eps, lambda s: -1, T, rec_diag)
    return out


def coupled_discrepancy(spec: DgpSpec, T: int, seed=None) -> float:
    """Mean over ``t`` of ``|x_t - x~_t(t/T)|`` (Euclidean norm) on coupled paths."""
    x = simulate_dgp(spec, T, seed)
    xt = stationary_approx(spec, "diagonal", T, seed)
    return float(np.mean(np.linalg.norm(x - xt, axis=1)))


# --------------------------------------------------------------------------- coverage


@dataclass
class CoverageReport:
    """Group-averaged empirical coverage of the simultaneous band.

    ``coverage[(h, group, level)]`` is the fraction of (replication, element)
    pairs whose true curve stays inside the band on the whole interior grid.
    """

    dgp: str
    T: int
    h_list: list
    levels: list
    groups: list
    reps: int
    R: int
    seed: int
    coverage: dict
    n_dropped: dict
    wall_clock: float
    indicators: dict = field(default_factory=dict, repr=False)

    @property
    def valid(self) -> bool:
        return all(v <= 0.05 * self.reps for v in self.n_dropped.values())

    def table(self) -> list[dict]:
        rows = []
        for h in self.h_list:
            row = {"T": self.T, "h": h}
            for g in self.groups:
                for lv in self.levels:
                    row[f"{g}@{round(100 * lv)}%"] = self.coverage[(h, g, lv)]
            rows.append(row)
        return rows


def _one_replication(spec: DgpSpec, T: int, h_list, levels, R: int, ss: np.random.SeedSequence, grid,
                     groups: dict, per_element: bool):
    sim_ss, boot_ss = ss.spawn(2)
    X = simulate_dgp(spec, T, sim_ss)
    model = spec.model
    out = {}
    boot_children = boot_ss.spawn(len(h_list))
    for hi, h in enumerate(h_list):
        g = grid[interior_grid(grid, h)]
        try:
            curve = fit_curve(model, X, g, h)
            if not curve.converged.all():
                out[h] = None
                continue
            covs = [sandwich_cov(model, X, tau, h, f.theta) for tau, f in zip(curve.grid, curve.fits)]
        except (TVQMLEError, FloatingPointError, np.linalg.LinAlgError):
            out[h] = None
            continue
        truth = spec.theta(g)
        W = combined_weights(g, h, T)
        res = {}
        gseeds = boot_children[hi].spawn(len(groups))
        for (gname, names), gs in zip(groups.items(), gseeds):
            idx = model.index(names)
            blocks = [[i] for i in idx] if per_element else [idx]
            bs = gs.spawn(len(blocks))
            hits = {lv: [] for lv in levels}
            for b, s_b in zip(blocks, bs):
                sel = SelectionMatrix.from_indices(model.d, b)
                qs, _ = bootstrap_quantile(W, sel.k, [1 - lv for lv in levels], R, np.random.Generator(np.random.PCG64(s_b)))
                for lv, q in zip(levels, qs):
                    band = band_from_fit(curve, covs, T, sel, 1 - lv, R, q_hat=float(q))
                    hits[lv].extend(band.contains(truth[:, b]).tolist())
            res[gname] = {lv: np.array(hits[lv], dtype=float) for lv in levels}
        out[h] = res
    return out


def coverage_study(spec: DgpSpec, T: int, h_list: Sequence[float], alpha_list: Sequence[float] = (0.10, 0.05),
                   reps: int = 200, R: int = 500, seed: int = 0, workers: int = 1, G: int = 101,
                   groups: Optional[Sequence[str]] = None, per_element: bool = False) -> CoverageReport:
    """Monte Carlo coverage of the simultaneous band, group-averaged over elements.

    Each replication gets its own child of ``SeedSequence(seed)``, so the
    report does not depend on ``workers``.  Bands are evaluated on the
    points of an equispaced ``G``-point grid lying in ``[h, 1-h]``.
    ``alpha_list`` holds significance levels; coverages are keyed by the
    nominal level ``1 - alpha``.  Replications with failed fits are dropped.
    """
    if reps < 50:
        raise ValueError("coverage studies need reps >= 50")
    h_list = [float(check_bandwidth(h)) for h in h_list]
    levels = [1.0 - float(a) for a in alpha_list]
    if groups is None:
        gsel = dict(spec.groups)
    else:
        gsel = {g: spec.groups[g] for g in groups}
    grid = np.linspace(0.0, 1.0, G)
    children = np.random.SeedSequence(seed).spawn(reps)
    t0 = time.perf_counter()
    results = Parallel(n_jobs=workers)(
        delayed(_one_replication)(spec, T, h_list, levels, R, ss, grid, gsel, per_element) for ss in children
    )
    wall = time.perf_counter() - t0
    coverage, dropped, ind = {}, {}, {}
    for h in h_list:
        ok = [r[h] for r in results if r[h] is not None]
        dropped[h] = reps - len(ok)
        for g in gsel:
            for lv in levels:
                arr = np.array([r[g][lv] for r in ok]) if ok else np.zeros((0, 1))
                ind[(h, g, lv)] = arr
                coverage[(h, g, lv)] = float(arr.mean()) if arr.size else float("nan")
    return CoverageReport(spec.name, T, h_list, levels, list(gsel), reps, R, seed, coverage, dropped, wall, ind)
