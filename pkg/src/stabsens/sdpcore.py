"""Lyapunov stability index as a small semidefinite program.

For a state matrix ``J`` the stability index is

    eta(J) = min eta
             s.t.  -J^T Phi - Phi J + eta I >= 0
                    Phi - eps I >= 0
                   -Phi + I     >= 0

written in inequality form ``min c^T phi  s.t.  F(phi) = F0 + sum_i phi_i F_i >= 0``
with ``phi = (eta, svec(Phi))``.  Every ``F_i`` is block diagonal with three
``n x n`` blocks, so all matrices here are stored as ``(3, n, n)`` stacks and
the dual variable ``Upsilon`` is kept block diagonal as well.
"""

import enum
import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .symkernel import SymMatrix, smat_array, svec, sym_kron, tri

DEFAULT_EPS = 1e-6
DEFAULT_TOL = 1e-8
NBLOCKS = 3


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_TROUBLE = "NumericalTrouble"


class StatusNotOptimal(RuntimeError):
    """An operation required an Optimal certificate."""


@dataclass(frozen=True)
class StabilitySDP:
    """Data of the stability SDP for one state matrix.

    ``Fcal[b]`` is the ``N x m`` matrix whose column ``i`` is ``svec`` of
    block ``b`` of ``F_i``; ``f0[b]`` is ``svec`` of block ``b`` of ``F0``.
    """

    J: np.ndarray
    eps: float
    Fcal: np.ndarray
    f0: np.ndarray
    c: np.ndarray

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def m(self) -> int:
        return self.c.size

    @property
    def F0(self) -> np.ndarray:
        return smat_array(self.f0)

    def F(self, i: int) -> np.ndarray:
        """Blocks of the coefficient matrix ``F_i`` (``i = 1..m``) as ``(3, n, n)``."""
        if not 1 <= i <= self.m:
            raise IndexError(f"F_i index {i} outside 1..{self.m}")
        return smat_array(self.Fcal[:, :, i - 1])

    def full(self, blocks) -> np.ndarray:
        """Assemble a ``3n x 3n`` block-diagonal matrix from a block stack."""
        return sla.block_diag(*blocks)

    def slack(self, phi) -> np.ndarray:
        """Blocks of ``F(phi) = F0 + sum_i phi_i F_i``."""
        return smat_array(self.f0 + self.Fcal @ np.asarray(phi, dtype=float))


def lyapunov_svec_operator(J) -> np.ndarray:
    """svec representation of ``X -> -J^T X - X J``."""
    J = np.asarray(J, dtype=float)
    return -2.0 * sym_kron(np.eye(J.shape[0]), J.T)


def build_sdp(J, eps: float = DEFAULT_EPS) -> StabilitySDP:
    J = np.array(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"J must be square, got shape {J.shape}")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n = J.shape[0]
    N = tri(n)
    m = 1 + N
    s_eye = svec(np.eye(n))
    Fcal = np.zeros((NBLOCKS, N, m))
    Fcal[0, :, 0] = s_eye
    Fcal[0, :, 1:] = lyapunov_svec_operator(J)
    Fcal[1, :, 1:] = np.eye(N)
    Fcal[2, :, 1:] = -np.eye(N)
    f0 = np.stack([np.zeros(N), -eps * s_eye, s_eye])
    c = np.zeros(m)
    c[0] = 1.0
    return StabilitySDP(J, float(eps), Fcal, f0, c)


@dataclass(frozen=True)
class StabilityCertificate:
    eta: float
    Phi: SymMatrix
    Upsilon: tuple
    gap: float
    status: Status
    solve_time: float
    phi: np.ndarray = field(repr=False)
    upsilon: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    eps: float = DEFAULT_EPS
    iterations: int = 0
    dual_residual: float = 0.0

    @property
    def stable(self) -> bool:
        return self.eta < 0

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def phi_raw(self) -> np.ndarray:
        """``(eta, Phi_11, Phi_12, ..., Phi_nn)`` with unscaled upper-triangle entries."""
        n = self.Phi.dim
        rows, cols = np.triu_indices(n)
        return np.concatenate([[self.eta], self.Phi.array[rows, cols]])

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "stable": self.stable,
            "phi_svec": self.phi[1:].tolist(),
            "upsilon_svec": [svec(U).tolist() for U in self.Upsilon],
            "gap": self.gap,
            "status": self.status.value,
            "solve_time_s": self.solve_time,
            "iterations": self.iterations,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


CENTRALITY = 1e-4


def _centrality(S, Z):
    """``min eig(S Z) / mu`` over the blocks (0 if not interior)."""
    mu = float(np.einsum("bij,bji->", S, Z)) / (S.shape[0] * S.shape[1])
    if not mu > 0:
        return 0.0
    try:
        _, v = _nt_scaling(S, Z)
    except np.linalg.LinAlgError:
        return 0.0
    return float(v.min()) ** 2 / mu


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _initial_point(sdp: StabilitySDP):
    n = sdp.n
    J = sdp.J
    phi = np.zeros(sdp.m)
    Phi0 = 0.5 * (1.0 + sdp.eps) * np.eye(n)
    lam = np.linalg.eigvalsh(_sym(J.T @ Phi0 + Phi0 @ J))
    scale = max(1.0, np.abs(lam).max())
    phi[0] = lam[-1] + scale
    phi[1:] = svec(Phi0)
    Z = np.stack([np.eye(n) / n, np.eye(n) * scale / n, np.eye(n) * scale / n])
    return phi, Z


def _residuals(sdp, phi, Z):
    S = sdp.slack(phi)
    ups = svec(Z)
    rd = sdp.c - np.einsum("bNm,bN->m", sdp.Fcal, ups)
    gap = float(np.einsum("bij,bji->", S, Z))
    return S, rd, gap


COMP_SLACK = 10.0


def _complementarity(S, Z):
    """``max |svec((S Z + Z S)/2)|``; a small gap alone does not bound it."""
    return float(np.abs(svec(_sym(S @ Z))).max())


def _kkt_matrix(sdp, S, Z):
    """Newton matrix of the symmetrized optimality system at (S, Z).

    Rows: dual feasibility (m), then ``svec((S Z + Z S)/2)`` per block.
    Columns: ``dphi`` (m), then ``svec(dZ)`` per block.
    """
    N, m = sdp.Fcal.shape[1:]
    size = m + NBLOCKS * N
    K = np.zeros((size, size))
    eye = np.eye(sdp.n)
    for b in range(NBLOCKS):
        rows = slice(m + b * N, m + (b + 1) * N)
        K[:m, rows] = sdp.Fcal[b].T
        K[rows, :m] = sym_kron(Z[b], eye) @ sdp.Fcal[b]
        K[rows, rows] = sym_kron(S[b], eye)
    return K


def _polish(sdp, phi, Z, max_steps=5):
    """Newton iterations on the complementarity system with zero target.

    Returns the polished ``(phi, Z, resid)`` or ``None`` when the iteration
    does not converge to a PSD pair.  The optimality residual is
    ``max(|c - Fcal^T svec(Z)|, |svec((F(phi) Z + Z F(phi))/2)|)``.
    """
    N, m = sdp.Fcal.shape[1:]
    scale = max(1.0, abs(phi[0]), np.abs(Z).max())

    def resid(phi, Z):
        S, rd, _ = _residuals(sdp, phi, Z)
        comp = svec(_sym(S @ Z))
        return S, np.concatenate([-rd, comp.reshape(-1)])

    S, r = resid(phi, Z)
    best = np.abs(r).max()
    for _ in range(max_steps):
        if best <= 1e-14 * scale:
            break
        K = _kkt_matrix(sdp, S, Z)
        try:
            step = np.linalg.solve(K, -r)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        phi_new = phi + step[:m]
        Z_new = _sym(Z + smat_array(step[m:].reshape(NBLOCKS, N)))
        S_new, r_new = resid(phi_new, Z_new)
        new = np.abs(r_new).max()
        if not new < 0.5 * best:
            break
        if new > 1e-2 * best and best > 1e-12 * scale:
            # no Newton-like contraction: the optimum is (numerically) degenerate
            return None
        phi, Z, S, r, best = phi_new, Z_new, S_new, r_new, new
    floor = -1e-10 * scale
    if min(np.linalg.eigvalsh(S).min(), np.linalg.eigvalsh(Z).min()) < floor:
        return None
    return phi, Z, best


def _nt_scaling(S, Z):
    """Nesterov-Todd scaling per block.

    Returns ``G`` with ``G^T S G = G^{-1} Z G^{-T} = diag(v)`` and the
    vector ``v``; computed from Cholesky factors and an SVD so that no
    ill-conditioned inverse is formed.
    """
    Gs, vs = [], []
    for Sb, Zb in zip(S, Z):
        LS = np.linalg.cholesky(Sb)
        LZ = np.linalg.cholesky(Zb)
        U, d, _ = np.linalg.svd(LZ.T @ LS)
        Gs.append(LZ @ U / np.sqrt(d))
        vs.append(d)
    return np.stack(Gs), np.stack(vs)


def _scaled_step(v, dX):
    """Largest alpha with diag(v) + alpha dX PSD, per block."""
    alpha = np.inf
    for vb, dXb in zip(v, dX):
        r = 1.0 / np.sqrt(vb)
        lam = np.linalg.eigvalsh(r[:, None] * dXb * r[None, :])[0]
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def solve_sdp(sdp: StabilitySDP, tol: float = DEFAULT_TOL, max_iter: int = 100,
              polish: bool = True) -> StabilityCertificate:
    """Primal-dual interior-point solve of the stability SDP.

    Nesterov-Todd search directions with Mehrotra predictor-corrector steps,
    starting from the strictly feasible ``Phi = (1 + eps)/2 I``.  The
    reduced system is solved as a least-squares problem in the scaled space
    (QR instead of normal equations), which keeps the directions accurate
    when the complementary blocks become badly scaled.  Iterates keep
    ``F(phi)`` exactly affine in ``phi``, so primal feasibility is
    structural; dual directions are projected onto the equality
    constraints.  Near the optimum a Newton polish on the symmetrized
    complementarity system removes the remaining central-path offset.
    """
    if not tol >= 1e-10:
        raise ValueError("tol must be at least 1e-10")
    t0 = time.perf_counter()
    n = sdp.n
    nu = NBLOCKS * n
    N, m = sdp.Fcal.shape[1:]
    phi, Z = _initial_point(sdp)
    status = Status.MAX_ITERATIONS
    best = None
    polish_from = max(1e-6, 100 * tol)
    polish_tries = 0
    it = 0
    for it in range(1, max_iter + 1):
        S, rd, gap = _residuals(sdp, phi, Z)
        comp = _complementarity(S, Z)
        merit = max(abs(gap), np.abs(rd).max(), comp)
        if best is None or merit < best[0]:
            best = (merit, phi, Z)
        if polish and merit <= polish_from and polish_tries < 2:
            polish_tries += 1
            out = _polish(sdp, phi, Z)
            if out is not None and out[2] <= 1e-3 * tol:
                phi, Z = out[0], out[1]
                best = None
                status = Status.OPTIMAL
                break
        if gap <= 0.1 * tol and np.abs(rd).max() <= 0.1 * tol and comp <= tol:
            status = Status.OPTIMAL
            break
        mu = gap / nu
        try:
            G, v = _nt_scaling(S, Z)
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_TROUBLE
            break
        B = np.concatenate([sym_kron(Gb.T, Gb.T) @ Fb for Gb, Fb in zip(G, sdp.Fcal)])
        # Householder QR without forming Q; Q^T is applied with ormqr
        qr, tau, _, _ = sla.lapack.dgeqrf(B)
        Rf = np.triu(qr[: B.shape[1]])
        if np.abs(np.diag(Rf)).min() <= 1e-300:
            status = Status.NUMERICAL_TROUBLE
            break
        rd_part = sla.solve_triangular(Rf, rd, trans="T")
        lwork = max(1, B.shape[1]) * 64
        vsum = v[:, :, None] + v[:, None, :]
        Gt = np.swapaxes(G, -1, -2)

        def direction(rhs):
            # rhs: scaled complementarity target, sym(V (dZh + dSh)) = rhs
            H = 2.0 * rhs / vsum
            qth = sla.lapack.dormqr("L", "T", qr, tau, svec(H).reshape(-1, 1), lwork)[0]
            dphi = sla.solve_triangular(Rf, qth[: B.shape[1], 0] - rd_part)
            dSh = smat_array((B @ dphi).reshape(NBLOCKS, N))
            dZh = H - dSh
            dS = smat_array(np.einsum("bNm,m->bN", sdp.Fcal, dphi))
            dZ = _sym(G @ dZh @ Gt)
            err = rd - np.einsum("bNm,bN->m", sdp.Fcal, svec(dZ))
            if np.abs(err).max() > 1e-3 * tol:
                # restore dual feasibility with the least scaled-norm correction
                # Q R^{-T} err, which leaves small eigen-directions of Z intact
                y = np.zeros((B.shape[0], 1))
                y[: B.shape[1], 0] = sla.solve_triangular(Rf, err, trans="T")
                corr = sla.lapack.dormqr("L", "N", qr, tau, y, lwork)[0][:, 0]
                dZh = dZh + smat_array(corr.reshape(NBLOCKS, N))
                dZ = _sym(G @ dZh @ Gt)
            return dphi, dS, dZ, dSh, dZh

        V2 = np.stack([np.diag(vb * vb) for vb in v])
        # predictor
        _, _, _, dSh_a, dZh_a = direction(-V2)
        ap = min(1.0, _scaled_step(v, dSh_a))
        ad = min(1.0, _scaled_step(v, dZh_a))
        mu_aff = float(np.einsum("bij,bji->", np.stack([np.diag(vb) for vb in v]) + ap * dSh_a,
                                 np.stack([np.diag(vb) for vb in v]) + ad * dZh_a)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # corrector; falls back to pure centring when the step cannot
        # stay in the neighbourhood
        eye = np.eye(n)
        for sig in (sigma, max(sigma, 0.5), 1.0):
            rhs = sig * mu * eye - V2 - (_sym(dSh_a @ dZh_a) if sig < 1.0 else 0.0)
            dphi, dS, dZ, dSh, dZh = direction(rhs)
            if not (np.all(np.isfinite(dphi)) and np.all(np.isfinite(dZ))):
                continue
            ap = min(1.0, 0.98 * _scaled_step(v, dSh))
            ad = min(1.0, 0.98 * _scaled_step(v, dZh))
            for _ in range(12):
                if _centrality(S + ap * dS, Z + ad * dZ) >= CENTRALITY:
                    break
                ap *= 0.7
                ad *= 0.7
            else:
                continue
            break
        else:
            status = Status.NUMERICAL_TROUBLE
            break
        phi = phi + ap * dphi
        Z = _sym(Z + ad * dZ)

    if best is not None and status != Status.OPTIMAL:
        S, rd, gap = _residuals(sdp, phi, Z)
        if max(abs(gap), np.abs(rd).max(), _complementarity(S, Z)) > best[0]:
            phi, Z = best[1], best[2]
    S, rd, gap = _residuals(sdp, phi, Z)
    # near-degenerate optima leave an O(tol) eigenvector misalignment that
    # neither the IPM nor Newton can remove; accept it one decade looser
    if abs(gap) <= tol and np.abs(rd).max() <= tol and _complementarity(S, Z) <= COMP_SLACK * tol:
        status = Status.OPTIMAL
    elif status == Status.OPTIMAL:
        status = Status.NUMERICAL_TROUBLE
    elapsed = time.perf_counter() - t0
    return StabilityCertificate(
        eta=float(phi[0]),
        Phi=SymMatrix(smat_array(phi[1:])),
        Upsilon=tuple(SymMatrix(Zb) for Zb in Z),
        gap=gap,
        status=status,
        solve_time=elapsed,
        phi=phi.copy(),
        upsilon=svec(Z).reshape(-1),
        J=sdp.J.copy(),
        eps=sdp.eps,
        iterations=it,
        dual_residual=float(np.abs(rd).max()),
    )


def stability_index(J, eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL, **kw) -> StabilityCertificate:
    return solve_sdp(build_sdp(J, eps), tol, **kw)


def check_constraint(cert: StabilityCertificate, eta_bar: float) -> bool:
    """Verdict of the stability constraint ``eta < eta_bar``."""
    if cert.status != Status.OPTIMAL:
        raise StatusNotOptimal(f"certificate status is {cert.status.value}")
    return cert.eta < eta_bar
