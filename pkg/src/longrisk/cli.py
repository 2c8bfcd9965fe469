"""Command-line interface.

Every output carries the resolved configuration and the SHA-256 of each
input file. Floats are written with 17 significant digits, and nothing
time-dependent is written, so reruns with identical flags reproduce the
output byte for byte.

Exit codes: 0 success, 2 unreadable input, 3 invalid input, 4 numerical
failure. Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._io import csv_text, dumps, fmt, sha256_file
from .eigen import certify_ergodicity, principal_eigen
from .errors import LongRiskError, NotStabilized, NumericalFailure, ParseError, ValidationError
from .longterm import convergence_report
from .model import CashFlowSpec, load_curve, load_model
from .montecarlo import aj_check, simulate, write_paths
from .yields import growth_yield, karamata_fit, power_yield_sweep, yield_sweep

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3, 4


def parse_range(text: str) -> list:
    """``start:stop:step`` (inclusive of ``stop``) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; expected start:stop:step or a,b,c") from None


def parse_vector(text: str) -> list:
    try:
        return [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad vector {text!r}") from None


def _provenance(args, inputs) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
    return {
        "version": __version__,
        "config": cfg,
        "inputs": {str(p): sha256_file(p) for p in inputs},
    }


def _comments(prov: dict, lam) -> list:
    lines = [] if lam is None else [f"lambda={fmt(lam)}"]
    lines.append("config=" + json.dumps(prov["config"], sort_keys=True))
    lines.append("inputs=" + json.dumps(prov["inputs"], sort_keys=True))
    lines.append(f"version={prov['version']}")
    return lines


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands ------------------------------------------------------------

def cmd_factorize(args):
    model, _ = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter)
    out = {"lambda": sol.lambda_, "pi": sol.pi, "eigen_transition": sol.eigen_transition,
           "residual": sol.residual, "iterations": sol.iterations}
    out["provenance"] = _provenance(args, [args.model])
    _emit(args, dumps(out))


def cmd_ergodicity(args):
    model, _ = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter)
    cert = certify_ergodicity(model, sol, grid_t_max=args.grid_t_max)
    out = cert.to_dict()
    out["J"] = cert.J
    out["grid_t_max"] = cert.grid_t_max
    out["provenance"] = _provenance(args, [args.model])
    _emit(args, dumps(out))


def cmd_yields(args):
    if (args.model is None) == (args.curve is None):
        raise ValidationError("yields needs exactly one of --model or --curve")
    if args.curve is not None:
        curve = load_curve(args.curve)
        rep = power_yield_sweep(curve, args.t, args.horizons, t_probe=args.t_probe)
        prov = _provenance(args, [args.curve])
        rows = [(T, v, "nan", rep.limit_target, abs(v - rep.limit_target)) for T, v in zip(rep.horizons, rep.varrho)]
        comments = [f"gamma={fmt(rep.limit_target)}"] + _comments(prov, 0.0)
        _emit(args, csv_text(["horizon", "rho_L", "rho_P", "target", "gap"], rows, comments))
        return
    model, growth = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter)
    prov = _provenance(args, [args.model])
    if args.growth:
        if growth is None:
            raise ValidationError("--growth needs a 'growth' matrix in the model file")
        rows = []
        for T in args.horizons:
            rL = growth_yield(model, growth, args.t, T, args.x, "L", sol)
            rP = growth_yield(model, growth, args.t, T, args.x, "P", sol)
            rows.append((T, rL, rP, sol.lambda_, abs(rL - sol.lambda_)))
    else:
        C = CashFlowSpec(args.cashflow if args.cashflow is not None else np.ones(model.n_states))
        rep = yield_sweep(model, sol, C, args.t, args.horizons, args.x)
        rows = list(rep.rows())
    _emit(args, csv_text(["horizon", "rho_L", "rho_P", "target", "gap"], rows, _comments(prov, sol.lambda_)))


def cmd_converge(args):
    model, _ = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = convergence_report(model, sol, args.t, args.horizons, n_paths=args.n_paths, seed=args.seed, x0=args.x0)
    prov = _provenance(args, [args.model])
    comments = _comments(prov, sol.lambda_) + [f"mode={rep.mode}", f"fitted_rate={fmt(rep.fitted_rate)}"]
    _emit(args, csv_text(["horizon", "l1_M", "ucp_B", "emery_lb", "tv_Q", "stderr_flags"], rep.rows(), comments))
    if args.json:
        d = rep.to_dict()
        d["provenance"] = prov
        Path(args.json).write_text(dumps(d))


def cmd_karamata(args):
    curve = load_curve(args.curve)
    fit = karamata_fit(curve, args.t_probe)
    out = fit.to_dict()
    out["provenance"] = _provenance(args, [args.curve])
    _emit(args, dumps(out))


def cmd_simulate(args):
    model, _ = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter) if args.measure == "L" else None
    bundle = simulate(model, args.measure, args.x0, args.horizon, args.n_paths, args.seed, sol=sol)
    out = bundle.metadata()
    if sol is not None:
        out["lambda"] = sol.lambda_
    if args.dump:
        write_paths(bundle, args.dump)
        out["dump"] = {"path": str(args.dump), "sha256": sha256_file(args.dump)}
    out["provenance"] = _provenance(args, [args.model])
    _emit(args, dumps(out))


def cmd_ajcheck(args):
    model, _ = load_model(args.model)
    sol = principal_eigen(model, tol=args.tol, max_iter=args.max_iter)
    prov = _provenance(args, [args.model])
    try:
        rep = aj_check(model, sol, args.t_grid, args.tau_max, x0=args.x0)
    except NotStabilized as exc:
        if exc.report is not None:
            d = exc.report.to_dict()
            d["provenance"] = prov
            _emit(args, dumps(d))
        raise
    d = rep.to_dict()
    d["provenance"] = prov
    _emit(args, dumps(d))


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="longrisk",
        description="Long-term factorization of pricing kernels on finite-state Markov models.",
        epilog="Horizon ranges use start:stop:step with stop included, e.g. 4:20:2. "
        "LONGRISK_THREADS caps internal parallelism. Exit codes: 0 ok, 2 parse, 3 validation, 4 numerical.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file")
        sp.add_argument("--output", "-o", help="output file (default stdout)")
        sp.add_argument("--tol", type=float, default=1e-13, help="eigen residual tolerance")
        sp.add_argument("--max-iter", type=int, default=100_000)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("factorize", help="principal eigenvalue, eigenfunction and eigen-measure")
    common(sp)
    sp.set_defaults(func=cmd_factorize)

    sp = sub.add_parser("ergodicity", help="exponential ergodicity certificate")
    common(sp)
    sp.add_argument("--grid-t-max", type=int, default=200)
    sp.set_defaults(func=cmd_ergodicity)

    sp = sub.add_parser("yields", help="yield sweep over horizons (model or curve mode)")
    sp.add_argument("--model", help="model JSON file")
    sp.add_argument("--curve", help="curve CSV file (power-yield mode)")
    common(sp, model=False)
    sp.add_argument("--t", type=int, default=0)
    sp.add_argument("--horizons", type=parse_range, required=True, help="start:stop:step, stop inclusive")
    sp.add_argument("--x", type=int, default=0, help="conditioning state")
    sp.add_argument("--cashflow", type=parse_vector, help="payoff per state, comma separated")
    sp.add_argument("--growth", action="store_true", help="yield on the model file's growth index")
    sp.add_argument("--t-probe", type=float, default=None)
    sp.set_defaults(func=cmd_yields)

    sp = sub.add_parser("converge", help="convergence report of forward objects to their limits")
    common(sp)
    sp.add_argument("--t", type=int, required=True, help="fixed time t")
    sp.add_argument("--horizons", type=parse_range, required=True, help="start:stop:step, stop inclusive")
    sp.add_argument("--n-paths", type=int, default=10_000)
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--json", help="also write the report as JSON")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("karamata", help="Karamata fit of a discount curve")
    sp.add_argument("--curve", required=True)
    sp.add_argument("--output", "-o")
    sp.add_argument("--t-probe", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_karamata)

    sp = sub.add_parser("simulate", help="seeded path simulation")
    common(sp)
    sp.add_argument("--measure", default="P", help="P, L or QT(T)")
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--horizon", type=int, required=True)
    sp.add_argument("--n-paths", type=int, default=10_000)
    sp.add_argument("--dump", help="binary path dump file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ajcheck", help="Alvarez-Jermann conditions")
    common(sp)
    sp.add_argument("--t-grid", type=parse_range, default=[0, 1, 2, 3, 4, 5])
    sp.add_argument("--tau-max", type=int, default=100)
    sp.add_argument("--x0", type=int, default=0)
    sp.set_defaults(func=cmd_ajcheck)
    return p


def _fail(exc, code) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("residual", "iterations"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    sys.stderr.write(dumps(err))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ParseError as exc:
        return _fail(exc, EXIT_PARSE)
    except ValidationError as exc:
        return _fail(exc, EXIT_INVALID)
    except NumericalFailure as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except LongRiskError as exc:
        return _fail(exc, EXIT_INVALID)
    except (TypeError, ValueError) as exc:
        # malformed values that slipped past the readers
        return _fail(ParseError(str(exc)), EXIT_PARSE)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
