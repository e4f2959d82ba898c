"""``stabsens`` command line.

Exit status is 0 on success, 1 for usage or input errors and 2 when a
numerical step fails.  Results are JSON on stdout or in ``--out``.
"""

import argparse
import json
import sys

import numpy as np

from . import bench
from .fdbase import FDConfig, Scheme, fd_report, fd_sens_entry
from .sdpcore import DEFAULT_EPS, DEFAULT_TOL, Status, StatusNotOptimal, check_constraint, stability_index
from .senscore import DegenerateKKT, IFTSolver, NotAtOptimum, analytic_report, sens_entry
from .symkernel import DimensionError
from .sysmodel import (ConfigurationError, IntegrationDiverged, droop_grid, jacobian_at,
                       parametric_from_dict, parametric_to_dict, simulate_decay, solve_lyapunov,
                       system_from_dict)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _floats(text, what):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def _emit(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _certify(J, args):
    cert = stability_index(J, eps=args.eps, tol=args.tol)
    if cert.status != Status.OPTIMAL:
        raise NumericalFailure(f"SDP solve ended with status {cert.status.value} (gap {cert.gap:.3g})")
    return cert


def cmd_index(args):
    J = system_from_dict(_read_json(args.system))
    cert = stability_index(J, eps=args.eps, tol=args.tol)
    _emit(cert.to_dict(), args.out)
    return EXIT_OK if cert.status == Status.OPTIMAL else EXIT_NUMERIC


def cmd_lyap(args):
    if not args.xi < 0:
        raise UsageError("--xi must be negative")
    res = solve_lyapunov(system_from_dict(_read_json(args.system)), args.xi)
    _emit({"Phi": res.Phi.array.tolist(), "positive_definite": res.positive_definite,
           "stable": res.positive_definite, "residual": res.residual}, args.out)
    return EXIT_OK


def _entry(text):
    vals = text.split(",")
    try:
        i, j = (int(v) for v in vals)
    except ValueError:
        raise UsageError(f"--entry must be 'i,j', got {text!r}") from None
    return i, j


def cmd_sens(args):
    if (args.system is None) == (args.model is None):
        raise UsageError("give exactly one of --system or --model")
    if args.system is not None:
        J, pj = system_from_dict(_read_json(args.system)), None
        if args.at is not None:
            raise UsageError("--at applies to --model only")
    else:
        pj = parametric_from_dict(_read_json(args.model))
        if args.at is not None:
            pj = pj.with_d(_floats(args.at, "--at"))
        J = jacobian_at(pj)
    method = args.method
    if method != "analytic":
        cfg = FDConfig(args.fd_step, Scheme.FORWARD if method == "fd" else Scheme.CENTRAL)
    if args.entry is not None:
        i, j = _entry(args.entry)
        if not (0 <= i < J.shape[0] and 0 <= j < J.shape[0]):
            raise UsageError(f"--entry {i},{j} is outside a {J.shape[0]}x{J.shape[0]} Jacobian")
        if method == "analytic":
            value = sens_entry(_certify(J, args), J, i, j)
        else:
            value = fd_sens_entry(J, i, j, cfg, args.eps, args.tol)
        _emit({"method": method, "entry": [i, j], "d_eta_d_J_entry": value}, args.out)
        return EXIT_OK
    if method == "analytic":
        report = analytic_report(_certify(J, args), pj)
    elif pj is not None:
        report = fd_report(cfg, pj=pj, eps=args.eps, tol=args.tol)
    else:
        report = fd_report(cfg, J=J, eps=args.eps, tol=args.tol)
    _emit(report.to_dict(), args.out)
    return EXIT_OK


def cmd_simulate(args):
    J = system_from_dict(_read_json(args.system))
    x0 = _read_json(args.x0)
    if isinstance(x0, dict):
        x0 = x0.get("x0")
    try:
        x0 = np.asarray(x0, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        x0 = None
    if x0 is None or x0.size == 0 or not np.all(np.isfinite(x0)):
        raise UsageError("--x0 must hold a list of finite numbers or {\"x0\": [...]}")
    if not (args.t_end > 0 and 0 < args.dt <= args.t_end):
        raise UsageError("need 0 < dt <= t-end")
    cert = _certify(J, args)
    traj = simulate_decay(J, cert.Phi, cert.eta, x0, args.t_end, args.dt)
    _emit({"eta": cert.eta, "times": traj.times.tolist(), "states": traj.states.tolist(),
           "lyapunov_values": traj.lyapunov_values.tolist(),
           "violations": traj.n_violations}, args.out)
    return EXIT_OK


def cmd_check(args):
    cert = _certify(system_from_dict(_read_json(args.system)), args)
    _emit({"eta": cert.eta, "eta_bar": args.eta_bar,
           "satisfied": check_constraint(cert, args.eta_bar)}, args.out)
    return EXIT_OK


def cmd_bench(args):
    steps = _floats(args.fd_steps, "--fd-steps")
    if args.scenarios < 1 or not steps or min(steps) <= 0:
        raise UsageError("need --scenarios >= 1 and positive --fd-steps")
    cfg = bench.BenchConfig(_read_json(args.model), scenarios=args.scenarios, seed=args.seed,
                            fd_steps=steps, eps=args.eps, tol=args.tol, eta_bar=args.eta_bar,
                            exclude_degenerate=not args.include_degenerate, parallel=args.parallel)
    try:
        report = bench.run_bench(cfg)
    except RuntimeError as exc:
        raise NumericalFailure(str(exc)) from exc
    if args.out:
        bench.write_report(report, args.out)
    else:
        _emit(report.to_dict(), None)
    return EXIT_OK


def cmd_model(args):
    buses = tuple(int(b) for b in _floats(args.buses, "--buses"))
    pj = droop_grid(n=args.n, buses=buses, seed=args.seed)
    _emit(parametric_to_dict(pj), args.out)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="stabsens", description="Lyapunov-SDP stability index and its sensitivities.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_opts(sp):
        sp.add_argument("--eps", type=float, default=DEFAULT_EPS, help="lower bound on Phi")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver tolerance")
        sp.add_argument("--out", help="write JSON here instead of stdout")

    sp = sub.add_parser("index", help="stability index and certificate")
    sp.add_argument("--system", required=True)
    solver_opts(sp)
    sp.set_defaults(func=cmd_index)

    sp = sub.add_parser("lyap", help="classical Lyapunov equation test")
    sp.add_argument("--system", required=True)
    sp.add_argument("--xi", type=float, default=-1.0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lyap)

    sp = sub.add_parser("sens", help="sensitivity of the index")
    sp.add_argument("--system")
    sp.add_argument("--model")
    sp.add_argument("--at", help="comma-separated parameter vector for --model")
    sp.add_argument("--method", choices=("analytic", "fd", "central"), default="analytic")
    sp.add_argument("--fd-step", type=float, default=1e-3)
    sp.add_argument("--entry", help="single entry 'i,j' (0-based)")
    solver_opts(sp)
    sp.set_defaults(func=cmd_sens)

    sp = sub.add_parser("simulate", help="check the decay bound along a trajectory")
    sp.add_argument("--system", required=True)
    sp.add_argument("--x0", required=True, help="JSON file with the initial state")
    sp.add_argument("--t-end", type=float, required=True)
    sp.add_argument("--dt", type=float, default=0.01)
    solver_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="Monte-Carlo benchmark against forward differences")
    sp.add_argument("--model", required=True)
    sp.add_argument("--scenarios", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fd-steps", default="1e-1,1e-2,1e-3")
    sp.add_argument("--eta-bar", type=float, default=0.0)
    sp.add_argument("--include-degenerate", action="store_true")
    sp.add_argument("--parallel", action="store_true",
                    help=f"use worker processes (count from {bench.THREADS_ENV}); timings become unreliable")
    solver_opts(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("check", help="verdict on the constraint eta < eta_bar")
    sp.add_argument("--system", required=True)
    sp.add_argument("--eta-bar", type=float, required=True)
    solver_opts(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("model", help="write the synthetic droop-grid model file")
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--buses", default="2,5,8")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_model)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, DimensionError, IndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, StatusNotOptimal, NotAtOptimum, DegenerateKKT, IntegrationDiverged,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:
        # --help and friends
        return exc.code if isinstance(exc.code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
