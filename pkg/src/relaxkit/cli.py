"""Command-line interface: ``relaxkit {relax,matrix,simulate,validate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation failure.  Every output file starts with (or, for JSON,
contains) the tool version and a hash of the configuration.  Wall times
go to a separate ``*.timing.json`` file so the main outputs stay
byte-identical across runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import _rng
from .bernstein import make_family
from .errors import ConfigError, DomainError, RelaxkitError
from .invsub import mc_q
from .laplace import InversionConfig
from .relaxation import (
    relax_series,
    relax_transform,
    solve_adjoint_cq,
    solve_backward_cq,
)
from .semimarkov import (
    kolmogorov_residual,
    load_model,
    matrix_relax,
    occupancy,
    occupation_stats,
    renewal_solve,
    sample_waiting_times,
    simulate,
)
from .validation import DEFAULT_SEED, SUITES, report_json, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

# settings that do not change results and are left out of the hash
_NOT_HASHED = {"out", "workers", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _diagnostic("config", message)
        sys.exit(EXIT_CONFIG)


def _diagnostic(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")


def config_hash(args) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_HASHED}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _banner(args):
    return f"relaxkit {__version__} config_hash={config_hash(args)}"


def _write(args, name, text):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _write_json(args, name, payload):
    payload = dict(payload, version=__version__, config_hash=config_hash(args))
    return _write(args, name, json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
                  + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(type(obj))


def _write_timing(args, name, seconds):
    _write(args, f"{name}.timing.json", json.dumps({"wall_time_s": seconds}) + "\n")


def _time_grid(args):
    if not args.tmax > 0:
        raise ConfigError("--tmax must be positive")
    if args.points < 1:
        raise ConfigError("--points must be >= 1")
    if args.grid == "linear":
        return args.tmax * np.arange(args.points + 1) / args.points
    tmin = args.tmin if args.tmin is not None else args.tmax * 1e-3
    if not 0 < tmin < args.tmax:
        raise ConfigError("--tmin must lie in (0, tmax)")
    return np.concatenate([[0.0], np.geomspace(tmin, args.tmax, args.points)])


def _cfg(args):
    return InversionConfig(args.talbot_nodes, args.stehfest_order, args.agreement_tol)


# -- commands -------------------------------------------------------------------------

def cmd_relax(args):
    f = make_family(args.family)
    method = args.method
    if method == "transform":
        curve = relax_transform(f, args.lam, _time_grid(args), _cfg(args))
    elif method == "series":
        if f.family != "stable":
            raise ConfigError("the series method needs a stable family")
        curve = relax_series(f.beta, args.lam, _time_grid(args))
    else:
        if args.grid != "linear":
            raise ConfigError("CQ methods need a linear grid")
        dt = args.dt if args.dt is not None else args.tmax / args.points
        solver = solve_backward_cq if method == "cq_backward" else solve_adjoint_cq
        curve = solver(f, args.lam, dt, args.tmax)
    _write(args, "relax.csv", curve.to_csv(comment=_banner(args)))
    _write_json(args, "relax.json", {
        "command": "relax", "family": f.descriptor(), "lambda": args.lam, "method": method,
        "points": len(curve), "max_err": float(np.max(curve.err)),
        "disagree": int(curve.meta.get("disagree", 0)),
        "tolerances": {"agreement_tol": args.agreement_tol, "talbot_nodes": args.talbot_nodes,
                       "stehfest_order": args.stehfest_order},
    })
    return EXIT_OK


def _model(args):
    return load_model(args.model, symmetric=not args.nonsymmetric)


def cmd_matrix(args):
    model = _model(args)
    cfg = _cfg(args)
    if args.method == "spectral":
        curve = matrix_relax(model, _time_grid(args), cfg, args.workers)
    else:
        if args.grid != "linear":
            raise ConfigError("the renewal method needs a linear grid")
        dt = args.dt if args.dt is not None else args.tmax / args.points
        curve = renewal_solve(model, dt, args.tmax, cfg)
    meta = {"command": "matrix", "method": args.method, "model": model.to_dict(),
            "invariants": curve.invariants()}
    if args.grid == "linear" and len(curve.times) >= 3:
        meta["residual"] = kolmogorov_residual(curve, model, args.form).as_dict()
    if args.check_against:
        ref = matrix_relax(model, curve.times, cfg, args.workers)
        meta["check_against"] = {"method": "spectral",
                                 "sup_diff": float(np.max(np.abs(ref.matrices - curve.matrices)))}
    _write(args, "matrix.csv", curve.to_csv(comment=_banner(args)))
    _write_json(args, "matrix.json", meta)
    return EXIT_OK


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_simulate(args):
    model = _model(args)
    seed = _rng.resolve_seed(args.seed)
    times = _floats(args.t)
    report = args.report
    payload = {"command": "simulate", "report": report, "seed": seed, "model": model.to_dict()}
    if report == "path":
        path = simulate(model, max(times), _rng.block_rng(seed, 0, 0), start=args.start)
        _write(args, "path.csv", f"# {_banner(args)}\n" + path.to_csv())
    elif report == "waiting":
        J = sample_waiting_times(model, args.n_paths, seed, args.workers)
        ref = relax_transform(model.f, model.lam, times).values
        surv = [float((J > t).mean()) for t in times]
        payload.update(t=times, survival=surv, transform=ref,
                       se=[float(np.sqrt(q * (1 - q) / args.n_paths)) for q in ref])
    elif report == "occupancy":
        occ = occupancy(model, args.start, times[0], args.n_paths, seed, args.workers)
        payload.update(t=times[0], start=args.start, fractions=occ.fractions, se=occ.se,
                       n=occ.n)
        if model.symmetric:
            ref = matrix_relax(model, [times[0]]).matrices[0, args.start]
            payload.update(spectral=ref, within_3se=bool(np.all(
                np.abs(occ.fractions - ref) <= 3 * np.maximum(occ.se, 1e-300))))
    elif report == "returns":
        rep = occupation_stats(model, args.state, _floats(args.horizons), args.n_paths, seed,
                               args.workers)
        payload.update(rep.as_dict())
    elif report == "mcq":
        res = mc_q(model.f, model.lam, times, args.n_paths, seed, workers=args.workers)
        payload.update(t=times, results=[json.loads(r.to_json()) for r in res])
    _write_json(args, f"simulate_{report}.json", payload)
    return EXIT_OK


def cmd_validate(args):
    if args.seed is None and _rng.SEED_ENV not in os.environ:
        seed = DEFAULT_SEED
    else:
        seed = _rng.resolve_seed(args.seed)
    results = run_suite(args.suite, seed, echo=print)
    _write(args, f"validate_{args.suite}.json", report_json(results, args.suite, seed) + "\n")
    _write(args, f"validate_{args.suite}.timing.json",
           json.dumps({str(r.number): r.runtime for r in results}, indent=2) + "\n")
    ok = all(r.passed for r in results)
    print(f"suite {args.suite}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VALIDATION


# -- parser ---------------------------------------------------------------------------

def _common(p, grid=True):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--workers", type=int, default=1)
    if grid:
        p.add_argument("--tmax", type=float, default=2.0)
        p.add_argument("--points", type=int, default=200,
                       help="number of grid intervals (linear) or positive points (log)")
        p.add_argument("--grid", choices=("linear", "log"), default="linear")
        p.add_argument("--tmin", type=float, default=None, help="first positive point of a log grid")
        p.add_argument("--dt", type=float, default=None, help="CQ/renewal step (default tmax/points)")
        p.add_argument("--talbot-nodes", type=int, default=32)
        p.add_argument("--stehfest-order", type=int, default=16)
        p.add_argument("--agreement-tol", type=float, default=1e-6)


def build_parser():
    parser = _Parser(prog="relaxkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"relaxkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("relax", help="relaxation curve q(lambda, t)")
    p.add_argument("--family", default="stable:beta=0.5")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--method", default="transform",
                   choices=("transform", "series", "cq_backward", "cq_adjoint"))
    _common(p)
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("matrix", help="transition matrices q(A, t) of a model")
    p.add_argument("--model", required=True, help="JSON model file")
    p.add_argument("--method", default="spectral", choices=("spectral", "renewal"))
    p.add_argument("--check-against", choices=("spectral",), default=None)
    p.add_argument("--form", default="backward",
                   choices=("backward", "forward", "backward_adjoint", "forward_adjoint"))
    p.add_argument("--nonsymmetric", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("simulate", help="Monte Carlo experiments on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--report", default="path",
                   choices=("path", "waiting", "occupancy", "returns", "mcq"))
    p.add_argument("--seed", default=None, help=f"falls back to ${_rng.SEED_ENV}")
    p.add_argument("--t", default="1", help="time or comma-separated times")
    p.add_argument("--n-paths", type=int, default=100_000)
    p.add_argument("--horizons", default="100,1000,10000")
    p.add_argument("--state", type=int, default=0)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--nonsymmetric", action="store_true")
    _common(p, grid=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run an acceptance suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--seed", default=None)
    _common(p, grid=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        rc = args.func(args)
        if rc == EXIT_OK and args.command != "validate":
            _write_timing(args, args.command, time.perf_counter() - t0)
        return rc
    except (ConfigError, DomainError) as exc:
        _diagnostic("config", exc)
        return EXIT_CONFIG
    except (RelaxkitError, ArithmeticError, FloatingPointError) as exc:
        _diagnostic("numerical", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
