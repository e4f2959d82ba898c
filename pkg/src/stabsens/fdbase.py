"""Perturbation baselines for the stability-index sensitivity.

Forward differences re-solve the SDP at ``d + h e_k`` and reuse one base
solve across all parameters, so ``p`` parameters cost ``p + 1`` solves.
Central differences cost two solves per parameter and serve as the
higher-order oracle.
"""

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .sdpcore import DEFAULT_EPS, DEFAULT_TOL, Status, StatusNotOptimal, stability_index
from .senscore import Method, SensitivityReport
from .sysmodel import ParametricJacobian, jacobian_at


class Scheme(str, enum.Enum):
    FORWARD = "forward"
    CENTRAL = "central"


@dataclass(frozen=True)
class FDConfig:
    eps_p: float = 1e-2
    scheme: Scheme = Scheme.FORWARD
    relative_step: bool = False

    def __post_init__(self):
        if not self.eps_p > 0:
            raise ValueError(f"eps_p must be positive, got {self.eps_p}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    def step(self, value: float) -> float:
        return self.eps_p * max(1.0, abs(value)) if self.relative_step else self.eps_p


@dataclass
class SolveLog:
    """Solve count and per-solve wall time of one finite-difference evaluation."""

    times: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.times)

    @property
    def total(self) -> float:
        return float(sum(self.times))


def _eta(J, eps, tol, log: SolveLog, where: str) -> float:
    t0 = time.perf_counter()
    cert = stability_index(J, eps=eps, tol=tol)
    log.times.append(time.perf_counter() - t0)
    if cert.status != Status.OPTIMAL:
        raise StatusNotOptimal(f"solve at {where} ended with status {cert.status.value}")
    return cert.eta


def _difference(evaluate, value, cfg: FDConfig, base, solve_args, label):
    """Finite difference of ``eta(evaluate(t))`` at ``t = value``.

    ``base`` is ``eta`` at ``value`` when already known; ``solve_args`` is
    ``(eps, tol, log)``.
    """
    h = cfg.step(value)
    up = _eta(evaluate(value + h), *solve_args, f"{label} + {h:g}")
    if cfg.scheme is Scheme.FORWARD:
        if base is None:
            base = _eta(evaluate(value), *solve_args, f"{label} base")
        return (up - base) / h
    down = _eta(evaluate(value - h), *solve_args, f"{label} - {h:g}")
    return (up - down) / (2.0 * h)


def fd_sens_param(pj: ParametricJacobian, d, k: int, cfg: FDConfig, eps: float = DEFAULT_EPS,
                  tol: float = DEFAULT_TOL, base: float = None, log: SolveLog = None) -> float:
    """``d eta / d d_k`` by perturbing one parameter.

    ``base`` supplies an already computed ``eta(d)`` for the forward scheme.
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    if not 0 <= k < d.size:
        raise IndexError(f"parameter index {k} out of range for {d.size} parameters")
    log = SolveLog() if log is None else log

    def at(t):
        dk = d.copy()
        dk[k] = t
        return jacobian_at(pj, dk)

    return _difference(at, d[k], cfg, base, (eps, tol, log), f"d[{k}]")


def fd_sens_entry(J, i: int, j: int, cfg: FDConfig, eps: float = DEFAULT_EPS,
                  tol: float = DEFAULT_TOL, base: float = None, log: SolveLog = None) -> float:
    """``d eta / d J[i, j]`` by perturbing one Jacobian entry."""
    J = np.array(J, dtype=float)
    n = J.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"entry ({i}, {j}) outside a {n}x{n} Jacobian")
    log = SolveLog() if log is None else log

    def at(t):
        Jt = J.copy()
        Jt[i, j] = t
        return Jt

    return _difference(at, J[i, j], cfg, base, (eps, tol, log), f"J[{i},{j}]")


def fd_sens_params(pj: ParametricJacobian, d, cfg: FDConfig, eps: float = DEFAULT_EPS,
                   tol: float = DEFAULT_TOL, base: float = None, log: SolveLog = None) -> np.ndarray:
    """All ``d eta / d d_k``; the forward scheme shares one base solve."""
    d = np.asarray(d, dtype=float).reshape(-1)
    log = SolveLog() if log is None else log
    if cfg.scheme is Scheme.FORWARD and base is None:
        base = _eta(jacobian_at(pj, d), eps, tol, log, "base point")
    return np.array([fd_sens_param(pj, d, k, cfg, eps, tol, base, log) for k in range(d.size)])


def fd_sens_matrix(J, cfg: FDConfig, eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL,
                   log: SolveLog = None) -> np.ndarray:
    J = np.array(J, dtype=float)
    log = SolveLog() if log is None else log
    base = _eta(J, eps, tol, log, "base point") if cfg.scheme is Scheme.FORWARD else None
    n = J.shape[0]
    return np.array([[fd_sens_entry(J, i, j, cfg, eps, tol, base, log) for j in range(n)]
                     for i in range(n)])


def fd_report(cfg: FDConfig, *, J=None, pj: ParametricJacobian = None, d=None,
              eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL) -> SensitivityReport:
    """Finite-difference counterpart of :func:`stabsens.senscore.analytic_report`.

    With ``pj`` only the parameter sensitivities are computed, otherwise the
    full ``d eta / d J`` of ``J``.
    """
    t0 = time.perf_counter()
    method = Method.FORWARD_FD if cfg.scheme is Scheme.FORWARD else Method.CENTRAL_FD
    if pj is not None:
        d = pj.d if d is None else d
        vals = fd_sens_params(pj, d, cfg, eps, tol)
        return SensitivityReport(method, None, dict(zip(pj.names, vals.tolist())),
                                 elapsed=time.perf_counter() - t0)
    if J is None:
        raise ValueError("fd_report needs J or a parametric family")
    dJ = fd_sens_matrix(J, cfg, eps, tol)
    return SensitivityReport(method, dJ, None, elapsed=time.perf_counter() - t0)
