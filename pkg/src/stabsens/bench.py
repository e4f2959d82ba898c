"""Monte-Carlo benchmark of analytic against forward-difference sensitivities."""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fdbase import FDConfig, Scheme, SolveLog, fd_sens_params
from .sdpcore import DEFAULT_EPS, DEFAULT_TOL, Status, StatusNotOptimal, stability_index
from .senscore import DegenerateKKT, IFTSolver, NotAtOptimum, sens_matrix, sens_params
from .sysmodel import (ParametricJacobian, jacobian_at, parametric_from_dict,
                       parametric_to_dict, scenario_gen)

THREADS_ENV = "STABSENS_THREADS"


def accuracy_degree(analytic, numerical) -> float:
    """Accuracy of ``numerical`` against the ``analytic`` reference, in percent.

    ``100 * (1 - mean |a - n| / |a|)``.  Scenarios with ``a == 0`` have no
    relative deviation and are skipped.
    """
    a = np.asarray(analytic, dtype=float).reshape(-1)
    x = np.asarray(numerical, dtype=float).reshape(-1)
    if a.size == 0 or a.size != x.size:
        raise ValueError(f"need equal nonzero lengths, got {a.size} and {x.size}")
    keep = a != 0
    if not keep.any():
        raise ValueError("every analytic value is zero")
    return float(100.0 * (1.0 - np.mean(np.abs(a[keep] - x[keep]) / np.abs(a[keep]))))


def _step_key(h: float) -> str:
    return f"{h:g}"


@dataclass
class BenchConfig:
    model: object
    scenarios: int = 1000
    seed: int = 0
    fd_steps: tuple = (1e-1, 1e-2, 1e-3)
    eps: float = DEFAULT_EPS
    tol: float = DEFAULT_TOL
    eta_bar: float = 0.0
    exclude_degenerate: bool = True
    parallel: bool = False

    def __post_init__(self):
        if self.scenarios < 1:
            raise ValueError("scenarios must be at least 1")
        self.fd_steps = tuple(float(h) for h in self.fd_steps)
        if not self.fd_steps:
            raise ValueError("fd_steps must not be empty")
        for h in self.fd_steps:
            FDConfig(h)

    def load_model(self) -> ParametricJacobian:
        if isinstance(self.model, ParametricJacobian):
            return self.model
        if isinstance(self.model, dict):
            return parametric_from_dict(self.model)
        with open(self.model) as fh:
            return parametric_from_dict(json.load(fh))


@dataclass
class ScenarioRecord:
    index: int
    d: list
    eta: float = None
    status: str = None
    stable: bool = None
    meets_bound: bool = None
    degenerate: bool = False
    cond_estimate: float = None
    analytic: list = None
    fd: dict = field(default_factory=dict)
    t_solve: float = 0.0
    t_analytic: float = 0.0
    t_fd: dict = field(default_factory=dict)
    error: str = None


def _evaluate(pj: ParametricJacobian, index: int, d, cfg: BenchConfig) -> ScenarioRecord:
    rec = ScenarioRecord(index, [float(x) for x in d])
    J = jacobian_at(pj, d)
    t0 = time.perf_counter()
    cert = stability_index(J, eps=cfg.eps, tol=cfg.tol)
    rec.t_solve = time.perf_counter() - t0
    rec.eta, rec.status, rec.stable = cert.eta, cert.status.value, cert.stable
    if cert.status != Status.OPTIMAL:
        rec.error = f"base solve {cert.status.value}"
        return rec
    rec.meets_bound = bool(cert.eta < cfg.eta_bar)
    t0 = time.perf_counter()
    try:
        solver = IFTSolver.at(cert)
        grads = sens_params(cert, pj, dJ=sens_matrix(cert, solver=solver))
    except (NotAtOptimum, DegenerateKKT) as exc:
        rec.error = f"analytic: {exc}"
        return rec
    rec.t_analytic = rec.t_solve + time.perf_counter() - t0
    rec.analytic = grads.tolist()
    rec.degenerate, rec.cond_estimate = solver.degenerate, solver.cond_estimate
    for h in cfg.fd_steps:
        log = SolveLog()
        try:
            vals = fd_sens_params(pj, d, FDConfig(h, Scheme.FORWARD), cfg.eps, cfg.tol,
                                  base=cert.eta, log=log)
        except StatusNotOptimal as exc:
            rec.error = f"fd {_step_key(h)}: {exc}"
            return rec
        # the shared base solve is part of the baseline's cost
        rec.t_fd[_step_key(h)] = rec.t_solve + log.total
        rec.fd[_step_key(h)] = vals.tolist()
    return rec


def _worker(args):
    return _evaluate(*args)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class BenchReport:
    names: list
    fd_steps: list
    alpha: dict
    median_abs_error: dict
    t_cpu: dict
    r_t: dict
    n_scenarios: int
    n_used: int
    n_degenerate: int
    n_failed: int
    n_zero_analytic: dict
    timing_valid: bool
    seed: int
    records: list = field(repr=False, default_factory=list)

    def to_dict(self, records: bool = True) -> dict:
        out = asdict(self)
        if not records:
            out.pop("records")
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def write_csv(self, path) -> None:
        keys = [_step_key(h) for h in self.fd_steps]
        header = (["scenario"] + [f"d_{nm}" for nm in self.names]
                  + ["eta", "status", "degenerate", "cond_estimate", "t_solve", "t_analytic"]
                  + [f"analytic_{nm}" for nm in self.names]
                  + [f"fd{k}_{nm}" for k in keys for nm in self.names]
                  + [f"t_fd{k}" for k in keys] + ["error"])
        blank = [""] * len(self.names)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.records:
                row = [r["index"], *r["d"], r["eta"], r["status"], r["degenerate"],
                       r["cond_estimate"], r["t_solve"], r["t_analytic"]]
                row += r["analytic"] or blank
                for k in keys:
                    row += r["fd"].get(k, blank)
                row += [r["t_fd"].get(k, "") for k in keys] + [r["error"] or ""]
                w.writerow(row)


def run_bench(cfg: BenchConfig) -> BenchReport:
    pj = cfg.load_model()
    if not pj.modes:
        raise ValueError("the model has no parameters to differentiate")
    ds = scenario_gen(pj, cfg.scenarios, cfg.seed)
    jobs = [(pj, i, d, cfg) for i, d in enumerate(ds)]
    workers = worker_count() if cfg.parallel else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_evaluate(*job) for job in jobs]

    keys = [_step_key(h) for h in cfg.fd_steps]
    failed = [r for r in records if r.error is not None]
    degenerate = [r for r in records if r.error is None and r.degenerate]
    used = [r for r in records if r.error is None and not (cfg.exclude_degenerate and r.degenerate)]
    if not used:
        raise RuntimeError(f"no usable scenarios: {len(failed)} failed, {len(degenerate)} degenerate")

    A = np.array([r.analytic for r in used])
    alpha, med, zeros = {}, {}, {}
    for k, name in enumerate(pj.names):
        zeros[name] = int(np.sum(A[:, k] == 0))
        alpha[name], med[name] = {}, {}
        for key in keys:
            F = np.array([r.fd[key][k] for r in used])
            try:
                alpha[name][key] = accuracy_degree(A[:, k], F)
            except ValueError:
                alpha[name][key] = None
            med[name][key] = float(np.median(np.abs(A[:, k] - F)))
    # timings cover every scenario that completed all methods
    done = [r for r in records if r.error is None]
    t_an = float(sum(r.t_analytic for r in done))
    t_fd = {key: float(sum(r.t_fd[key] for r in done)) for key in keys}
    r_t = {key: (t_fd[key] - t_an) / t_fd[key] if t_fd[key] > 0 else None for key in keys}
    return BenchReport(
        names=pj.names, fd_steps=list(cfg.fd_steps), alpha=alpha, median_abs_error=med,
        t_cpu={"analytic": t_an, "forward_fd": t_fd}, r_t=r_t, n_scenarios=len(records),
        n_used=len(used), n_degenerate=len(degenerate) if cfg.exclude_degenerate else 0,
        n_failed=len(failed), n_zero_analytic=zeros, timing_valid=workers == 1, seed=cfg.seed,
        records=[asdict(r) for r in records],
    )


def write_report(report: BenchReport, out) -> None:
    """JSON report at ``out`` plus the per-scenario CSV next to it."""
    out = Path(out)
    out.write_text(report.to_json(indent=2))
    report.write_csv(out.with_suffix(".csv"))


def default_model_document(**kw) -> dict:
    from .sysmodel import droop_grid

    return parametric_to_dict(droop_grid(**kw))
