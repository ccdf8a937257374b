"""Command-line interface.

Subcommands: ``fit``, ``interpolate``, ``rates``, ``bench``, ``ktv``, ``dof``
and ``generate``. Grids are read and written in the self-describing binary
format (``.bin``), CSV (d <= 2) or 8-bit PGM; reports are JSON and tables are
long-format CSV. ``--figures DIR`` additionally renders PNG figures.

Exit codes: 0 success, 2 usage or input-format error, 3 solver
non-convergence (outputs are still written).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dof import dof_estimate, mad_sigma, risk_proxy
from .experiments import (EXPERIMENTS, add_noise, make_truth, rate_slope, run_rate_experiment,
                          synthetic_image)
from .interp import Interpolator
from .io import FormatError, atomic_write, read_grid, write_grid
from .lattice import GridSignal, LatticeError
from .penalty import KroneckerPenalty
from .prox import ConvergenceError
from .solvers import (AdmmConfig, dual_reference_solve, douglas_rachford, ktf_admm,
                      prox_dykstra)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGED = 3

SOLVERS = ("admm-type0", "admm-type1", "admm-type2", "admm-soft", "dykstra", "dr", "dual-ref")


class UsageError(Exception):
    """Bad arguments or input files; maps to exit code 2."""


# ---------------------------------------------------------------- helpers


def parse_lambda_grid(text: str) -> np.ndarray:
    """``min:max:count`` to a geometric grid in decreasing order."""
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise UsageError(f"--lambda-grid expects min:max:count, got {text!r}") from exc
    if not (0 < lo <= hi) or count < 1:
        raise UsageError("--lambda-grid needs 0 < min <= max and count >= 1")
    if count == 1:
        return np.array([hi])
    return np.geomspace(hi, lo, count)


def parse_int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc
    if not vals:
        raise UsageError("empty integer list")
    return vals


def split_index(solver: str, k: int) -> int:
    return {"admm-type0": 0, "admm-type1": 1, "admm-type2": k, "admm-soft": k + 1}[solver]


def admm_config(args, j: int) -> AdmmConfig:
    kw = dict(j=j, adaptive=not args.no_adaptive_rho, eps_abs=args.tol_abs, eps_rel=args.tol_rel)
    if args.rho0 is not None:
        kw["rho0"] = args.rho0
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    return AdmmConfig(**kw)


def run_solver(args, y, shape, k: int, lam: float, warm=None):
    """One fit with the solver selected by ``args.solver``."""
    s = args.solver
    if s.startswith("admm-"):
        j = split_index(s, k)
        if warm is not None and warm.state.get("j") != j:
            warm = None
        return ktf_admm(y, k, lam, admm_config(args, j), shape=shape, warm=warm)
    iters = args.max_iters if args.max_iters is not None else 200
    if s == "dykstra":
        return prox_dykstra(y, k, lam, iters=iters, shape=shape)
    if s == "dr":
        return douglas_rachford(y, k, lam, iters=iters, shape=shape)
    if s == "dual-ref":
        return dual_reference_solve(y, k, lam, tol=args.tol_abs, shape=shape,
                                    max_iters=args.max_iters if args.max_iters is not None else 200_000,
                                    strict=False)
    raise UsageError(f"unknown solver {s!r}")


def numbered(path: Path, i: int, count: int) -> Path:
    if count == 1:
        return path
    return path.with_name(f"{path.stem}_{i:02d}{path.suffix}")


def write_json(path, obj) -> None:
    atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def set_threads(n) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    sig = read_grid(args.input, args.format)
    y, shape = sig.to_array(), sig.shape
    if args.lambda_grid is not None:
        lams = parse_lambda_grid(args.lambda_grid)
    elif args.lam is not None:
        if args.lam < 0:
            raise UsageError("--lambda must be nonnegative")
        lams = np.array([args.lam])
    else:
        raise UsageError("fit needs --lambda or --lambda-grid")
    k = args.k
    sigma = mad_sigma(y)
    out = Path(args.output)
    fits, warm, ok = [], None, True
    for i, lam in enumerate(lams):
        t0 = time.perf_counter()
        res = run_solver(args, y, shape, k, float(lam), warm)
        secs = time.perf_counter() - t0
        warm = res if args.solver.startswith("admm-") else None
        theta = np.asarray(res.theta)
        path = numbered(out, i, lams.size)
        write_grid(path, GridSignal(shape, theta), args.out_format or args.format)
        df = dof_estimate(theta, k, args.dof_tol, shape)
        fits.append({
            "lambda": float(lam),
            "output": str(path),
            "objective": float(res.objective),
            "iters": int(res.iters),
            "converged": bool(res.converged),
            "seconds": secs,
            "primal_residuals": _floats(res.primal_residuals),
            "dual_residuals": _floats(res.dual_residuals),
            "ktv": float(KroneckerPenalty(shape, k).ktv(theta)),
            "dof": int(df),
            "risk_proxy": risk_proxy(y, theta, df, sigma),
        })
        ok &= bool(res.converged)
        print(f"lambda={lam:.6g} objective={res.objective:.10g} iters={res.iters} "
              f"converged={res.converged} dof={df}")
        if args.figures:
            from .plotting import plot_fit

            plot_fit(y, theta, Path(args.figures) / f"fit_{i:02d}.png", f"k={k}, lambda={lam:.4g}")
    report = {
        "command": "fit",
        "version": __version__,
        "input": str(args.input),
        "dims": list(shape.dims),
        "n": int(shape.n),
        "k": k,
        "solver": args.solver,
        "sigma_hat": sigma,
        "fits": fits,
    }
    if args.report:
        write_json(args.report, report)
    if not ok:
        print("warning: solver did not converge; outputs hold the last iterate", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def read_queries(path, d: int) -> np.ndarray:
    rows, first = [], True
    for ln in Path(path).read_text().splitlines():
        s = ln.strip()
        if not s or s.startswith("#"):
            continue
        parts = [p.strip() for p in s.split(",")]
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if first:
                first = False
                continue  # header
            raise UsageError(f"bad query line {ln!r}")
        first = False
        if len(vals) != d:
            raise UsageError(f"query has {len(vals)} coordinates, lattice has d = {d}")
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, d)


def cmd_interpolate(args) -> int:
    sig = read_grid(args.input, args.format)
    d = sig.shape.d
    X = read_queries(args.queries, d)
    vals = Interpolator(sig.shape, sig.to_array(), args.k).batch(X) if X.shape[0] else np.empty(0)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(d)] + ["value"])
    for x, v in zip(X, vals):
        w.writerow([repr(float(c)) for c in x] + [repr(float(v))])
    atomic_write(args.output, buf.getvalue().encode())
    return EXIT_OK


def cmd_rates(args) -> int:
    sides = parse_int_list(args.sides)
    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}")

    def progress(N, table):
        rows = [r for r in table.rows if r.n == N ** args.d]
        print("  ".join(f"n={r.n} {r.method} mse={r.best_mse:.4g}" for r in rows), flush=True)

    table = run_rate_experiment(args.experiment, sides, args.k, args.d, reps=args.reps,
                                seed=args.seed, sigma=args.sigma, n_lambda=args.n_lambda,
                                progress=progress)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "k", "d", "n", "method", "best_mse", "sd", "best_param"])
    for r in table.rows:
        w.writerow([table.experiment, table.k, table.d, r.n, r.method,
                    repr(r.best_mse), repr(r.sd), repr(r.best_param)])
    atomic_write(args.output, buf.getvalue().encode())
    slopes = {}
    for m in table.methods():
        try:
            s = rate_slope(table.method_rows(m))
            slopes[m] = {"slope": s.slope, "stderr": s.stderr, "intercept": s.intercept}
        except ValueError:
            slopes[m] = None
    summary = {"command": "rates", "version": __version__, "experiment": table.experiment,
               "k": table.k, "d": table.d, "sides": sides, "reps": args.reps, "seed": args.seed,
               "sigma": args.sigma, "slopes": slopes}
    for m, s in slopes.items():
        print(f"{m}: slope = {s['slope']:.4f}" if s else f"{m}: slope needs >= 3 sizes")
    if args.report:
        write_json(args.report, summary)
    if args.figures:
        from .plotting import plot_rates

        plot_rates(table, Path(args.figures) / f"rates_{table.experiment}.png")
    return EXIT_OK


def relative_subopt(objectives, fstar: float) -> np.ndarray:
    """``(f - f*) / f``, the gap relative to the objective value."""
    f = np.asarray(objectives, dtype=float)
    return (f - fstar) / np.maximum(np.abs(f), 1e-300)


def time_to(sub, times, target: float) -> float:
    hit = np.flatnonzero(np.asarray(sub) <= target)
    return float(np.asarray(times)[hit[0]]) if hit.size else float("nan")


def bench_problem(args, N: int) -> np.ndarray:
    if args.input:
        return read_grid(args.input, args.format).to_array()
    return add_noise(synthetic_image(N), sigma=args.sigma, seed=[args.seed, N])


def cmd_bench(args) -> int:
    sides = [0] if args.input else parse_int_list(args.sizes)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in SOLVERS:
            raise UsageError(f"unknown solver {s!r}")
    k, lam = args.k, args.lam
    timing, traces, optima = [], [], {}
    plots = {}
    for N in sides:
        y = bench_problem(args, N)
        ref = dual_reference_solve(y, k, lam, tol=args.ref_tol, strict=False)
        fstar = float(ref.objective)
        optima[str(y.shape[0])] = {"f_star": fstar, "gap": float(ref.gap), "certified": bool(ref.converged)}
        # compile-once warm-up so the timings below exclude JIT work
        small = np.ascontiguousarray(y[(slice(0, 8),) * y.ndim])
        for s in solvers:
            run_solver(_with(args, solver=s, max_iters=2), small, None, k, lam)
        for s in solvers:
            sargs = _with(args, solver=s)
            t0 = time.perf_counter()
            res = run_solver(sargs, y, None, k, lam)
            total = time.perf_counter() - t0
            sub = relative_subopt(res.objectives, fstar)
            times = np.asarray(res.times, dtype=float)
            timing.append({"side": y.shape[0], "n": int(y.size), "solver": s, "iters": int(res.iters),
                           "seconds": total, "per_iter_seconds": total / max(res.iters, 1),
                           "time_to_target": _finite(time_to(sub, times, args.target)),
                           "final_rel_subopt": _finite(sub[-1]) if sub.size else None})
            for i, (t, v) in enumerate(zip(times, sub)):
                traces.append((y.shape[0], s, i + 1, float(t), float(v)))
            plots[f"{s} ({y.shape[0]})"] = (times, sub)
            print(f"side={y.shape[0]} {s}: iters={res.iters} seconds={total:.3f} "
                  f"time_to_{args.target:g}={timing[-1]['time_to_target']}", flush=True)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["side", "n", "solver", "iters", "seconds", "per_iter_seconds", "time_to_target", "final_rel_subopt"]
    w.writerow(cols)
    for row in timing:
        w.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                    for c in cols])
    atomic_write(args.output, buf.getvalue().encode())
    if args.traces:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["side", "solver", "iter", "seconds", "rel_subopt"])
        for side, s, i, t, v in traces:
            w.writerow([side, s, i, repr(t), repr(v)])
        atomic_write(args.traces, buf.getvalue().encode())
    if args.report:
        write_json(args.report, {"command": "bench", "version": __version__, "k": k, "lambda": lam,
                                 "target": args.target, "optima": optima, "timing": timing})
    if args.figures:
        from .plotting import plot_traces

        plot_traces(plots, Path(args.figures) / "bench_iterations.png", x="iteration")
        plot_traces(plots, Path(args.figures) / "bench_seconds.png", x="seconds")
    return EXIT_OK


def _with(args, **kw):
    ns = argparse.Namespace(**vars(args))
    for key, v in kw.items():
        setattr(ns, key, v)
    return ns


def cmd_ktv(args) -> int:
    sig = read_grid(args.input, args.format)
    val = float(KroneckerPenalty(sig.shape, args.k).ktv(sig.to_array()))
    print(repr(val))
    if args.report:
        write_json(args.report, {"command": "ktv", "k": args.k, "ktv": val})
    return EXIT_OK


def cmd_dof(args) -> int:
    sig = read_grid(args.input, args.format)
    df = dof_estimate(sig.to_array(), args.k, args.dof_tol, sig.shape)
    print(df)
    if args.report:
        write_json(args.report, {"command": "dof", "k": args.k, "dof": int(df)})
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.experiment == "image":
        truth = synthetic_image(args.side)
    else:
        try:
            truth = make_truth(args.experiment, args.side, args.d, args.k)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    noisy = add_noise(truth, sigma=args.sigma, seed=args.seed) if args.sigma > 0 else truth
    write_grid(args.output, GridSignal.from_array(noisy), args.format)
    if args.truth:
        write_grid(args.truth, GridSignal.from_array(truth), args.format)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=os.environ.get("KTF_THREADS"),
                   help="numba worker threads (default $KTF_THREADS)")
    p.add_argument("--format", choices=("bin", "csv", "pgm"), default=None,
                   help="grid file format (default from the file suffix)")
    p.add_argument("--figures", metavar="DIR", default=None, help="also render PNG figures into DIR")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=SOLVERS, default="admm-type1")
    p.add_argument("--rho0", type=float, default=None, help="initial ADMM penalty (default lambda)")
    p.add_argument("--no-adaptive-rho", action="store_true", help="keep rho fixed")
    p.add_argument("--tol-abs", type=float, default=1e-6)
    p.add_argument("--tol-rel", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ktf", description="Kronecker trend filtering on lattices.")
    ap.add_argument("--version", action="version", version=f"ktf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit KTF to a grid")
    _common(p)
    _solver_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--out-format", choices=("bin", "csv", "pgm"), default=None)
    p.add_argument("--k", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float, default=None)
    g.add_argument("--lambda-grid", default=None, metavar="MIN:MAX:COUNT")
    p.add_argument("--dof-tol", type=float, default=1e-6,
                   help="relative threshold defining the active set (default 1e-6)")
    p.add_argument("--report", default=None, help="JSON report path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("interpolate", help="evaluate the interpolant of a fitted grid")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--queries", required=True, help="CSV with one point per line")
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, default=0)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("rates", help="oracle-tuned error rates of KTF and eigenmaps")
    _common(p)
    p.add_argument("--experiment", required=True)
    p.add_argument("--sides", default="16,32,64,128", help="lattice sides N (n = N^d)")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n-lambda", type=int, default=20)
    p.add_argument("--output", required=True, help="long-format CSV")
    p.add_argument("--report", default=None, help="slope summary JSON")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("bench", help="time solvers against the dual reference optimum")
    _common(p)
    _solver_flags(p)
    p.add_argument("--solvers", default="admm-type1,admm-type2,dual-ref")
    p.add_argument("--sizes", default="128", help="image sides")
    p.add_argument("--input", default=None, help="benchmark this grid instead of synthetic images")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--target", type=float, default=1e-2)
    p.add_argument("--ref-tol", type=float, default=1e-6, help="absolute duality gap of the reference optimum")
    p.add_argument("--output", required=True, help="timing CSV")
    p.add_argument("--traces", default=None, help="suboptimality traces CSV")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_bench, max_iters=None)

    p = sub.add_parser("ktv", help="Kronecker total variation of a grid")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_ktv)

    p = sub.add_parser("dof", help="degrees of freedom of a fitted grid")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--dof-tol", type=float, default=1e-6)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_dof)

    p = sub.add_parser("generate", help="write a test signal with optional noise")
    _common(p)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS + ("image",))
    p.add_argument("--side", type=int, default=32)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.add_argument("--truth", default=None, help="also write the noiseless signal")
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "k", 0) < 0:
            raise UsageError("--k must be nonnegative")
        set_threads(args.threads)
        return args.func(args)
    except (UsageError, FormatError, LatticeError, FileNotFoundError) as exc:
        print(f"ktf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"ktf: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"ktf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
