"""First-order sensitivity of the stability index through the optimality system.

At a primal-dual optimum ``psi = (phi, upsilon)`` of the stability SDP the
residual

    G(psi, J) = [ Fcal(J)^T upsilon - c              ]   dual feasibility
                [ (Upsilon (*) I) svec(F(phi, J))    ]   complementarity

vanishes.  When its Jacobian ``G'`` is invertible the implicit function
theorem gives ``dpsi/dJ_ij = -G'^{-1} dG/dJ_ij``; the first component is
``d eta / d J_ij``.  ``(*)`` is the symmetrized Kronecker operator from
:mod:`stabsens.symkernel`.  All dual quantities are block diagonal with
three ``n x n`` blocks and are handled block by block.
"""

import enum
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .sdpcore import (DEFAULT_EPS, NBLOCKS, StabilityCertificate, Status, StatusNotOptimal,
                      build_sdp)
from .symkernel import DimensionError, smat_array, svec, sym_kron, tri
from .sysmodel import ParametricJacobian, djacobian

KKT_GATE = 1e-6
COND_LIMIT = 1e12


class NotAtOptimum(RuntimeError):
    """The optimality residual is too large for the implicit function theorem."""


class DegenerateKKT(np.linalg.LinAlgError):
    """The linearized optimality system produced a non-finite solution."""


class Method(str, enum.Enum):
    ANALYTIC = "analytic"
    FORWARD_FD = "forward-fd"
    CENTRAL_FD = "central-fd"


@dataclass(frozen=True)
class KKTPoint:
    """Primal vector ``phi`` (``eta`` first, then ``svec(Phi)``), the stacked
    dual ``upsilon`` (``svec`` of each of the three blocks) and ``J``."""

    phi: np.ndarray
    upsilon: np.ndarray
    J: np.ndarray
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        ups = np.asarray(self.upsilon, dtype=float).reshape(-1)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionError(f"J must be square, got shape {J.shape}")
        N = tri(J.shape[0])
        if phi.size != 1 + N or ups.size != NBLOCKS * N:
            raise DimensionError(
                f"phi has length {phi.size} (need {1 + N}), upsilon {ups.size} (need {NBLOCKS * N})"
            )
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "upsilon", ups)

    @classmethod
    def from_certificate(cls, cert: StabilityCertificate) -> "KKTPoint":
        return cls(cert.phi, cert.upsilon, cert.J, cert.eps)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    def blocks(self) -> np.ndarray:
        return smat_array(self.upsilon.reshape(NBLOCKS, -1))


def _parts(pt: KKTPoint):
    sdp = build_sdp(pt.J, pt.eps)
    return sdp, sdp.slack(pt.phi), pt.blocks()


def assemble_G(pt: KKTPoint) -> np.ndarray:
    """Optimality residual, length ``m + 3 n(n+1)/2``."""
    sdp, S, U = _parts(pt)
    N = sdp.Fcal.shape[1]
    ups = pt.upsilon.reshape(NBLOCKS, N)
    g1 = np.einsum("bNm,bN->m", sdp.Fcal, ups) - sdp.c
    eye = np.eye(pt.n)
    g2 = [sym_kron(U[b], eye) @ svec(S[b]) for b in range(NBLOCKS)]
    return np.concatenate([g1, *g2])


def assemble_Gprime(pt: KKTPoint) -> np.ndarray:
    """Jacobian of :func:`assemble_G` with respect to ``(phi, upsilon)``.

    Block form ``[[0, Fcal^T], [(Upsilon (*) I) Fcal, F(phi) (*) I]]`` with the
    lower blocks block diagonal over the three constraint blocks.
    """
    sdp, S, U = _parts(pt)
    N, m = sdp.Fcal.shape[1:]
    size = m + NBLOCKS * N
    Gp = np.zeros((size, size))
    eye = np.eye(pt.n)
    for b in range(NBLOCKS):
        rows = slice(m + b * N, m + (b + 1) * N)
        Gp[:m, rows] = sdp.Fcal[b].T
        Gp[rows, :m] = sym_kron(U[b], eye) @ sdp.Fcal[b]
        Gp[rows, rows] = sym_kron(S[b], eye)
    return Gp


def _dG_directions(pt: KKTPoint, D: np.ndarray) -> np.ndarray:
    """``dG`` along perturbations ``J -> J + t D_k`` for a stack ``D`` of shape (K, n, n).

    Only the Lyapunov block depends on ``J``: its coefficient matrices move
    by ``-D^T T_i - T_i D`` and ``F0`` does not move.  Returns (size, K).
    """
    n = pt.n
    N = tri(n)
    m = 1 + N
    U = pt.blocks()
    U0 = U[0]
    Phi = smat_array(pt.phi[1:])
    Dt = np.swapaxes(D, -1, -2)
    K = D.shape[0]
    out = np.zeros((m + NBLOCKS * N, K))
    # (dFcal/dt)^T upsilon: component i is Tr((-D^T T_i - T_i D) U0)
    out[1:m] = -svec(D @ U0 + U0 @ Dt).T
    # (U0 (*) I)(dFcal/dt phi + svec(dF0/dt)) on the Lyapunov block
    dS = -(Dt @ Phi + Phi @ D)
    out[m:m + N] = svec(0.5 * (dS @ U0 + U0 @ dS)).T
    return out


def assemble_dG_dJ(pt: KKTPoint, i: int, j: int) -> np.ndarray:
    """Partial derivative of :func:`assemble_G` with respect to ``J[i, j]``."""
    n = pt.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"entry ({i}, {j}) outside a {n}x{n} Jacobian")
    E = np.zeros((1, n, n))
    E[0, i, j] = 1.0
    return _dG_directions(pt, E)[:, 0]


def _unit_directions(n):
    E = np.zeros((n * n, n, n))
    E[np.arange(n * n), np.repeat(np.arange(n), n), np.tile(np.arange(n), n)] = 1.0
    return E


@dataclass
class IFTSolver:
    """Factorization of ``G'`` at a certified optimum, reused across right-hand sides."""

    point: KKTPoint
    Gprime: np.ndarray = field(repr=False)
    cond_estimate: float
    degenerate: bool
    _lu: tuple = field(default=None, repr=False)

    @classmethod
    def at(cls, cert: StabilityCertificate, J=None, gate: float = KKT_GATE,
           cond_limit: float = COND_LIMIT) -> "IFTSolver":
        if cert.status != Status.OPTIMAL:
            raise StatusNotOptimal(f"certificate status is {cert.status.value}")
        if J is not None and not np.array_equal(np.asarray(J, dtype=float), cert.J):
            raise ValueError("J differs from the matrix the certificate was computed for")
        pt = KKTPoint.from_certificate(cert)
        resid = np.abs(assemble_G(pt)).max()
        if not resid <= gate:
            raise NotAtOptimum(f"|G|_inf = {resid:.3g} exceeds {gate:g}")
        Gp = assemble_Gprime(pt)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(Gp, check_finite=False)
        anorm = np.linalg.norm(Gp, 1)
        rcond, _ = sla.lapack.dgecon(lu[0], anorm, norm="1")
        cond = np.inf if rcond <= 0 else 1.0 / rcond
        return cls(pt, Gp, float(cond), bool(cond > cond_limit), lu)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """``s`` with ``G' s = rhs`` (minimum-norm least squares when degenerate)."""
        if self.degenerate:
            s = sla.lstsq(self.Gprime, rhs, cond=1.0 / COND_LIMIT, check_finite=False)[0]
        else:
            s = sla.lu_solve(self._lu, rhs, check_finite=False)
        if not np.all(np.isfinite(s)):
            raise DegenerateKKT("linearized optimality system returned non-finite values")
        return s

    def dpsi(self, D: np.ndarray) -> np.ndarray:
        """``dpsi`` along each direction of the stack ``D`` (columns)."""
        return self.solve(-_dG_directions(self.point, D))


def sens_entry(cert: StabilityCertificate, J, i: int, j: int) -> float:
    """``d eta / d J[i, j]`` at an optimal certificate."""
    solver = IFTSolver.at(cert, J)
    return float(solver.solve(-assemble_dG_dJ(solver.point, i, j))[0])


def sens_matrix(cert: StabilityCertificate, J=None, solver: IFTSolver = None) -> np.ndarray:
    """All ``d eta / d J[i, j]`` from one factorization of ``G'``."""
    solver = solver or IFTSolver.at(cert, J)
    n = solver.point.n
    return solver.dpsi(_unit_directions(n))[0].reshape(n, n)


def sens_params(cert: StabilityCertificate, pj: ParametricJacobian,
                solver: IFTSolver = None, dJ: np.ndarray = None) -> np.ndarray:
    """``d eta / d d_k = sum_ij (d eta / d J_ij) (M_k)_ij``.

    ``dJ`` may pass a precomputed :func:`sens_matrix` to avoid recomputing it.
    """
    if dJ is None:
        dJ = sens_matrix(cert, solver=solver)
    if pj.n != dJ.shape[0]:
        raise DimensionError("parametric family and certificate dimensions differ")
    return np.array([np.sum(dJ * djacobian(pj, k)) for k in range(len(pj.modes))])


@dataclass
class SensitivityReport:
    method: Method
    d_eta_d_J: np.ndarray = None
    d_eta_d_params: dict = None
    degenerate_flag: bool = False
    cond_estimate: float = float("nan")
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "d_eta_d_J": None if self.d_eta_d_J is None else np.asarray(self.d_eta_d_J).tolist(),
            "d_eta_d_params": self.d_eta_d_params,
            "degenerate": self.degenerate_flag,
            "cond_estimate": self.cond_estimate,
            "elapsed_s": self.elapsed,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def analytic_report(cert: StabilityCertificate, pj: ParametricJacobian = None) -> SensitivityReport:
    """Sensitivity report for one certificate; ``elapsed`` excludes the SDP solve."""
    t0 = time.perf_counter()
    solver = IFTSolver.at(cert)
    dJ = sens_matrix(cert, solver=solver)
    dd = None
    if pj is not None:
        dd = dict(zip(pj.names, sens_params(cert, pj, dJ=dJ).tolist()))
    return SensitivityReport(Method.ANALYTIC, dJ, dd, solver.degenerate, solver.cond_estimate,
                             time.perf_counter() - t0)
