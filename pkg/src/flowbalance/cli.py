"""Command line front end.

Exit codes: 0 success, 1 validation error, 2 numerical non-convergence,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import analysis
from .errors import (ConvergenceError, DivergenceError, EigenError, FlowBalanceError,
                     IntegrationError, UndefinedHazardError)
from .model import load_model
from .oracles import fd_hazard, simulate, SimConfig, write_series
from .oracles.series import fmt
from .sweep import SweepSpec, sweep_csv

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def resolve_model_path(path: str) -> str:
    """Return ``path`` if it exists, else a bundled model with that file name."""
    if os.path.exists(path):
        return path
    name = os.path.basename(path)
    if not name.endswith(".json"):
        name += ".json"
    bundled = resources.files("flowbalance") / "models" / name
    if bundled.is_file():
        return str(bundled)
    raise FileNotFoundError(f"model file not found: {path}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model_pos", nargs="?", metavar="MODEL", help="model JSON file")
    common.add_argument("--model", dest="model_opt", metavar="PATH")
    common.add_argument("--out", metavar="PATH", help="write CSV here")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--replications", type=int, default=100_000)
    common.add_argument("--horizon", type=float, default=None)
    common.add_argument("--dt", type=float, default=6e-4)
    common.add_argument("--steps", type=int, default=10_000)
    common.add_argument("--window", type=float, nargs=2, metavar=("A", "B"), default=None)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=200)
    common.add_argument("--trace", metavar="PATH", help="where to write a failed iteration trace")

    p = argparse.ArgumentParser(prog="flowbalance", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("steady", parents=[common], help="corrected steady-state probabilities")
    sub.add_parser("hazard", parents=[common], help="quasi-stationary hazard fixed point")
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo oracle")
    sim.add_argument("--averaging", type=float, nargs=2, metavar=("C", "D"), default=None)
    sim.add_argument("--renewal", action="store_true", help="simulate the artificial renewal")
    sub.add_parser("fd", parents=[common], help="finite-difference hazard oracle")
    sw = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    sw.add_argument("--param", required=True, help="dotted path, e.g. parameters.q")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--analysis", default="steady", choices=sorted(analysis.ANALYSES))
    sub.add_parser("verify", parents=[common], help="analytic result against both oracles")
    return p


def _model(args):
    path = args.model_opt or args.model_pos
    if not path:
        raise FileNotFoundError("no model given (positional MODEL or --model PATH)")
    return load_model(resolve_model_path(path))


def _emit(args, text: str, out):
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def _record_csv(rec: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "value"])
    for key, x in rec.items():
        w.writerow([key, str(x) if isinstance(x, int) else fmt(x)])
    return buf.getvalue()


def _pretty(rec: dict, out):
    width = max(len(k) for k in rec)
    for key, x in rec.items():
        shown = str(x) if isinstance(x, int) else f"{x:.6g}"
        if key.startswith("P:") and isinstance(x, float):
            shown = f"{x:.5f}"
        out.write(f"{key.ljust(width)}  {shown}\n")


def _cmd_steady(args, out):
    rec = analysis.steady_record(_model(args))
    _pretty(rec, out)
    if args.out:
        _emit(args, _record_csv(rec), out)


def _cmd_hazard(args, out):
    rec = analysis.hazard_record(_model(args), tol=args.tol, max_iter=args.max_iter)
    _pretty(rec, out)
    if args.out:
        _emit(args, _record_csv(rec), out)


def _sim_config(args, model, hazard_default=(4.0, 6.0)):
    window = tuple(args.window) if args.window else (hazard_default if model.absorbing else None)
    averaging = getattr(args, "averaging", None)
    averaging = tuple(averaging) if averaging else None
    horizon = args.horizon
    if horizon is None:
        ends = [w[1] for w in (window, averaging) if w]
        horizon = max(ends) if ends else 1000.0
        if model.absorbing and window is not None and averaging is None:
            horizon = 1000.0
    return SimConfig(replications=args.replications, horizon=horizon, seed=args.seed,
                     hazard_window=window if model.absorbing else None,
                     averaging_window=averaging, renewal=getattr(args, "renewal", False))


def _cmd_simulate(args, out):
    model = _model(args)
    cfg = _sim_config(args, model)
    res = simulate(model, cfg)
    for name, est in res.state_probs.items():
        out.write(f"P:{name}  {est.value:.6g} +- {est.std_error:.2g}\n")
    if res.hazard is not None:
        h = res.hazard
        out.write(f"hazard  {h.value:.6g} +- {h.std_error:.2g}  (survivors {res.survivors_at_window})\n")
        if args.out:
            _emit(args, write_series(*h.series), out)
    if res.renewal_hazard is not None:
        r = res.renewal_hazard
        out.write(f"renewal_hazard  {r.value:.6g} +- {r.std_error:.2g}\n")
    elif model.absorbing and res.censored:
        out.write(f"renewal_hazard  unavailable ({res.censored} paths not absorbed by the horizon)\n")


def _cmd_fd(args, out):
    model = _model(args)
    window = tuple(args.window) if args.window else (4.0, 6.0)
    res = fd_hazard(model, args.dt, args.steps, window)
    out.write(f"hazard  {res.window_average:.6g}  (window {window[0]:g}..{window[1]:g}, "
              f"mass defect {res.mass_defect:.1e})\n")
    if args.out:
        _emit(args, write_series(res.times, res.hazard), out)


def _cmd_sweep(args, out):
    model = _model(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    options = {}
    if args.analysis == "hazard":
        options = {"tol": args.tol, "max_iter": args.max_iter}
    elif args.analysis == "fd":
        options = {"dt": args.dt, "steps": args.steps, "window": tuple(args.window or (4.0, 6.0))}
    elif args.analysis == "simulate":
        cfg = _sim_config(args, model)
        options = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    spec = SweepSpec(args.param, values, args.analysis, options)
    _emit(args, sweep_csv(model, spec), out)


def _cmd_verify(args, out):
    model = _model(args)
    rows = []
    if model.absorbing and all(s.regeneration for s in model.states):
        window = tuple(args.window) if args.window else (4.0, 6.0)
        rec = analysis.hazard_record(model, tol=args.tol, max_iter=args.max_iter)
        k = rec["k"]
        out.write(f"analytic k  {k:.6g}\n")
        try:
            fd = fd_hazard(model, args.dt, args.steps, window)
            rows.append(("fd", fd.window_average, None, fd.window_average - k))
        except FlowBalanceError as exc:
            out.write(f"fd  skipped: {exc}\n")
        cfg = SimConfig(replications=args.replications, horizon=args.horizon or window[1],
                        seed=args.seed, hazard_window=window)
        mc = simulate(model, cfg).hazard
        rows.append(("mc", mc.value, mc.std_error, mc.value - k))
    else:
        rec = analysis.steady_record(model)
        avg = tuple(args.window) if args.window else (100.0, 1000.0)
        cfg = SimConfig(replications=args.replications, horizon=args.horizon or avg[1],
                        seed=args.seed, averaging_window=avg, renewal=True)
        res = simulate(model, cfg)
        for name in model.state_names:
            p = rec[f"P:{name}"]
            out.write(f"analytic P:{name}  {p:.6g}\n")
            est = res.state_probs[name]
            rows.append((f"mc P:{name}", est.value, est.std_error, est.value - p))
    for label, value, se, delta in rows:
        if se is None:
            out.write(f"{label}  {value:.6g}  delta {delta:+.3e}\n")
        else:
            z = delta / se if se > 0 else (0.0 if delta == 0 else math.inf)
            out.write(f"{label}  {value:.6g} +- {se:.2g}  delta {delta:+.3e} ({z:+.2f} se)\n")


_COMMANDS = {
    "steady": _cmd_steady,
    "hazard": _cmd_hazard,
    "simulate": _cmd_simulate,
    "fd": _cmd_fd,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
}


def _write_trace(args, trace) -> str:
    path = args.trace or "fixed_point_trace.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "k_in", "k_out", "residual", "relaxation"])
        for i, s in enumerate(trace.steps):
            w.writerow([i, fmt(s.k_in), fmt(s.k_out), fmt(s.residual), fmt(s.relaxation)])
    return path


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = _parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args, out)
    except OSError as exc:
        err.write(f"I/O error: {exc}\n")
        return EXIT_IO
    except (ConvergenceError, DivergenceError) as exc:
        err.write(f"no convergence: {exc}\n")
        if exc.trace is not None and exc.trace.steps:
            try:
                err.write(f"trace written to {_write_trace(args, exc.trace)}\n")
            except OSError as io_exc:
                err.write(f"could not write trace: {io_exc}\n")
        return EXIT_NUMERIC
    except (EigenError, IntegrationError, UndefinedHazardError) as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (FlowBalanceError, ValueError) as exc:
        err.write(f"invalid input: {exc}\n")
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
