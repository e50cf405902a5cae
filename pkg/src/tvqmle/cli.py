"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``band``, ``cv``, ``coverage`` and
``gradcheck``.  All files are CSV with a header row; lines starting with
``#`` carry metadata.  Exit codes: 0 success, 1 numerical failure, 2 usage
or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .bandwidth import select_bandwidth
from .diagnostics import run_gradcheck
from .estimate import fit_curve, sandwich_cov
from .exceptions import TVQMLEError
from .inference import SelectionMatrix, band_from_fit, interior_grid
from .models import MGARCH, VARMA, ModelSpec, mgarch_spec, varma_spec
from .simulate import coverage_study, get_dgp, simulate_dgp

logger = logging.getLogger("tvqmle")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid configuration or unreadable input."""


def _fmt(v) -> str:
    return "%.17g" % v


def _write_csv(path: str, header: Sequence[str], rows, comments: Sequence[str] = ()) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(r if isinstance(r, str) else _fmt(r) for r in row))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def read_series(path: str) -> np.ndarray:
    """Read a ``t,x1,...,xm`` CSV; errors name the 1-based line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = [f.strip() for f in s.split(",")]
        if header is None:
            header = fields
            if len(header) < 2 or header[0] != "t":
                raise UsageError(f"{path}: line {lineno}: expected header 't,x1,...,xm'")
            continue
        if len(fields) != len(header):
            raise UsageError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(fields)}")
        try:
            vals = [float(f) for f in fields[1:]]
        except ValueError:
            raise UsageError(f"{path}: line {lineno}: malformed number") from None
        if not all(np.isfinite(vals)):
            raise UsageError(f"{path}: line {lineno}: non-finite value")
        rows.append(vals)
    if header is None or not rows:
        raise UsageError(f"{path}: no data rows")
    return np.array(rows)


# --------------------------------------------------------------------------- config helpers


def _model_spec(args, m: int) -> ModelSpec:
    if getattr(args, "dgp", None):
        spec = get_dgp(args.dgp).model
        if spec.m != m:
            raise UsageError(f"input has {m} series but {args.dgp} expects m={spec.m}")
        return spec
    if args.m is not None and args.m != m:
        raise UsageError(f"input has {m} series but --m {args.m} was given")
    try:
        if args.model == VARMA:
            return varma_spec(m, args.p, args.q, intercept=not args.no_intercept)
        return mgarch_spec(m, args.p, args.q)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(G: int) -> np.ndarray:
    if G < 2:
        raise UsageError("--grid needs at least 2 points")
    return np.linspace(0.0, 1.0, G)


def _check_h(h: float) -> float:
    if not (0.0 < h < 0.5):
        raise UsageError(f"--h must satisfy 0 < h < 0.5, got {h}")
    return h


def _selection(spec: ModelSpec, select: Optional[str]) -> list[int]:
    if not select:
        return list(range(spec.d))
    out = []
    for tok in select.split(","):
        tok = tok.strip()
        if tok.isdigit():
            i = int(tok)
            if not 1 <= i <= spec.d:
                raise UsageError(f"--select index {i} outside 1..{spec.d}")
            out.append(i - 1)
        elif tok in spec.layout:
            out.append(spec.layout.index(tok))
        else:
            raise UsageError(f"--select: unknown parameter {tok!r}; known: {','.join(spec.layout)}")
    if len(set(out)) != len(out):
        raise UsageError("--select lists a parameter twice")
    return out


def _fit(args, X):
    spec = _model_spec(args, X.shape[1])
    h = _check_h(args.h)
    grid = _grid(args.grid)
    try:
        curve = fit_curve(spec, X, grid, h)
    except np.linalg.LinAlgError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return spec, h, curve


def _covs(spec, X, h, curve, workers: int, mask=None):
    pairs = [(tau, f) for i, (tau, f) in enumerate(zip(curve.grid, curve.fits)) if mask is None or mask[i]]
    return Parallel(n_jobs=workers)(delayed(sandwich_cov)(spec, X, tau, h, f.theta) for tau, f in pairs)


def _meta(spec: ModelSpec, **extra) -> str:
    items = [f"model={spec.family}", f"m={spec.m}", f"p={spec.p}", f"q={spec.q}"]
    items += [f"{k}={v}" for k, v in extra.items()]
    return " ".join(items)


# --------------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    spec = get_dgp(args.dgp)
    if args.T < 1:
        raise UsageError("--T must be positive")
    X = simulate_dgp(spec, args.T, args.seed, min_length=1)
    header = ["t"] + [f"x{i + 1}" for i in range(spec.m)]
    rows = [[str(t + 1)] + list(x) for t, x in enumerate(X)]
    _write_csv(args.output, header, rows)
    return EXIT_OK


def cmd_fit(args) -> int:
    X = read_series(args.input)
    spec, h, curve = _fit(args, X)
    d = spec.d
    header = ["tau"] + [f"theta_{i + 1}" for i in range(d)] + [f"thetatilde_{i + 1}" for i in range(d)] + ["converged"]
    tilde = curve.bias_corrected
    rows = [[tau] + list(th) + list(tt) + [str(int(ok))]
            for tau, th, tt, ok in zip(curve.grid, curve.theta_hat, tilde, curve.converged)]
    meta = [_meta(spec, h=h, T=X.shape[0], G=len(curve.grid)), "params: " + ",".join(spec.layout)]
    _write_csv(args.output, header, rows, meta)
    cov_path = args.cov_output or str(Path(args.output).with_name(Path(args.output).stem + "_cov.csv"))
    covs = _covs(spec, X, h, curve, args.workers)
    cheader = ["tau"] + [f"S_{i + 1}_{j + 1}" for i in range(d) for j in range(d)]
    crows = [[tau] + list(c.Sigma_theta.ravel()) for tau, c in zip(curve.grid, covs)]
    _write_csv(cov_path, cheader, crows, meta + ["sandwich covariance Sigma_theta, row-major"])
    failed = curve.report["n_failed"]
    if failed:
        print(f"warning: {failed} of {len(curve.grid)} grid points did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_band(args) -> int:
    X = read_series(args.input)
    if args.R < 100:
        raise UsageError("--R must be at least 100")
    if not (0.0 < args.alpha < 1.0):
        raise UsageError("--alpha must lie in (0, 1)")
    spec = _model_spec(args, X.shape[1])
    idx = _selection(spec, args.select)
    h = _check_h(args.h)
    grid = _grid(args.grid)
    mask = interior_grid(grid, h)
    if not mask.any():
        raise UsageError("no grid point lies in [h, 1-h]")
    # same full-grid fit as `fit`, so the band matches its covariance file
    _, _, curve = _fit(args, X)
    inner = _covs(spec, X, h, curve, args.workers, mask)
    covs = [None] * len(grid)
    for i, c in zip(np.flatnonzero(mask), inner):
        covs[i] = c
    band = band_from_fit(curve, covs, X.shape[0], SelectionMatrix.from_indices(spec.d, idx), args.alpha, args.R,
                         args.seed)
    header = ["tau"]
    for i in idx:
        header += [f"center_{i + 1}", f"lower_{i + 1}", f"upper_{i + 1}"]
    rows = []
    for g, c, lo, up in zip(band.grid, band.center, band.lower, band.upper):
        row = [g]
        for j in range(len(idx)):
            row += [c[j], lo[j], up[j]]
        rows.append(row)
    meta = [
        f"q_hat={_fmt(band.q_hat)} R={args.R} seed={args.seed} alpha={args.alpha} h={h}",
        _meta(spec, T=X.shape[0], G=args.grid),
        "selected: " + ",".join(spec.layout[i] for i in idx),
    ]
    _write_csv(args.output, header, rows, meta)
    if not curve.converged[mask].all():
        print("warning: some grid points did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_cv(args) -> int:
    X = read_series(args.input)
    spec = _model_spec(args, X.shape[1])
    cand = None
    if args.candidates:
        try:
            cand = [float(c) for c in args.candidates.split(",")]
        except ValueError:
            raise UsageError("--candidates must be a comma-separated list of numbers") from None
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    try:
        res = select_bandwidth(spec, X, cand, args.stride, n_jobs=args.workers)
    except (np.linalg.LinAlgError, TVQMLEError):
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [[h, s, str(int(n))] for h, s, n in zip(res.candidates, res.scores, res.n_dropped)]
    if args.output:
        _write_csv(args.output, ["h", "score", "dropped"], rows,
                   [_meta(spec, T=X.shape[0], stride=args.stride)])
    else:
        print("h,score,dropped")
        for r in rows:
            print(",".join(v if isinstance(v, str) else _fmt(v) for v in r))
    print(f"h_hat={float(res.h_hat)!r}")
    print(f"h_tilde={float(res.h_tilde)!r}")
    return EXIT_OK


def cmd_coverage(args) -> int:
    spec = get_dgp(args.dgp)
    Ts = [int(t) for t in args.T.split(",")]
    hs = [float(h) for h in args.h.split(",")]
    alphas = [float(a) for a in args.alpha.split(",")]
    for h in hs:
        _check_h(h)
    if args.reps < 50:
        raise UsageError("--reps must be at least 50")
    if args.R < 100:
        raise UsageError("--R must be at least 100")
    header = ["T", "h"]
    levels = [1 - a for a in alphas]
    groups = list(spec.groups)
    for g in groups:
        header += [f"{g}_{round(100 * lv)}" for lv in levels]
    rows, notes, valid = [], [], True
    for T in Ts:
        rep = coverage_study(spec, T, hs, alphas, args.reps, args.R, args.seed, args.workers, args.grid,
                             per_element=args.per_element)
        print(f"T={T}: {rep.wall_clock:.1f}s", file=sys.stderr)
        valid &= rep.valid
        for h in hs:
            rows.append([str(T), h] + [rep.coverage[(h, g, lv)] for g in groups for lv in levels])
            notes.append(f"T={T} h={h} dropped={rep.n_dropped[h]}")
    meta = [f"dgp={spec.name} reps={args.reps} R={args.R} seed={args.seed} G={args.grid}"] + notes
    _write_csv(args.output, header, rows, meta) if args.output else None
    if not args.output:
        for c in meta:
            print(f"# {c}")
        print(",".join(header))
        for r in rows:
            print(",".join(v if isinstance(v, str) else _fmt(v) for v in r))
    return EXIT_OK if valid else EXIT_NUMERIC


def cmd_gradcheck(args) -> int:
    res = run_gradcheck(args.model, args.configs, args.seed, zero=args.zero)
    print(f"max_grad_rel_error={res.grad_error:.3e}")
    print(f"max_hess_rel_error={res.hess_error:.3e}")
    ok = res.grad_error < args.grad_tol and res.hess_error < args.hess_tol
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvqmle", description="Local linear QMLE for time-varying VARMA and MGARCH models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--model", choices=[VARMA, MGARCH], default=VARMA)
        sp.add_argument("--dgp", choices=["dgp1", "dgp2"], help="use the estimation model of a built-in DGP")
        sp.add_argument("--m", type=int, help="series dimension (checked against the input)")
        sp.add_argument("--p", type=int, default=1)
        sp.add_argument("--q", type=int, default=1)
        sp.add_argument("--no-intercept", action="store_true", help="VARMA without intercept")
        sp.add_argument("--input", required=True)
        sp.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("simulate", help="simulate a built-in DGP")
    s.add_argument("--dgp", choices=["dgp1", "dgp2"], default="dgp1")
    s.add_argument("--T", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True)
    s.add_argument("--workers", type=int, default=1, help="accepted for uniformity; simulation is sequential")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit coefficient curves and sandwich covariances")
    model_args(s)
    s.add_argument("--h", type=float, default=0.2)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--output", required=True)
    s.add_argument("--cov-output")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("band", help="simultaneous confidence band")
    model_args(s)
    s.add_argument("--h", type=float, default=0.2)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--R", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--select", help="comma-separated parameter names or 1-based indices")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_band)

    s = sub.add_parser("cv", help="cross-validation bandwidth selection")
    model_args(s)
    s.add_argument("--candidates", help="comma-separated candidate bandwidths")
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("coverage", help="Monte Carlo coverage of the simultaneous band")
    s.add_argument("--dgp", choices=["dgp1", "dgp2"], default="dgp1")
    s.add_argument("--T", default="1000", help="comma-separated sample sizes")
    s.add_argument("--h", default="0.4", help="comma-separated bandwidths")
    s.add_argument("--alpha", default="0.10,0.05", help="comma-separated significance levels")
    s.add_argument("--reps", type=int, default=200)
    s.add_argument("--R", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--per-element", action="store_true", help="one band per matrix element")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("gradcheck", help="finite-difference check of analytic derivatives")
    s.add_argument("--model", choices=[VARMA, MGARCH], default=VARMA)
    s.add_argument("--configs", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grad-tol", type=float, default=1e-5)
    s.add_argument("--hess-tol", type=float, default=1e-4)
    s.add_argument("--zero", action="store_true", help="zero-coefficient models")
    s.add_argument("--workers", type=int, default=1, help="accepted for uniformity; the check is sequential")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TVQMLEError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
