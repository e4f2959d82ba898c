"""Linear small-signal models.

Descriptor systems ``[dx; 0] = [[A, B], [C, D]] [x; y]`` are reduced to the
state matrix ``J = A - B D^{-1} C``.  Control parameters enter through an
affine family ``J(d) = J0 + sum_k d_k M_k`` so that ``dJ/dd_k = M_k`` is
exact.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .symkernel import DimensionError, SymMatrix

RCOND_MIN = 1e-12


class SingularAlgebraicBlock(np.linalg.LinAlgError):
    """The algebraic block D cannot be eliminated."""


class DegenerateSpectrum(np.linalg.LinAlgError):
    """The Lyapunov operator is singular (eigenvalues with lam_i + lam_j = 0)."""


class IntegrationDiverged(ArithmeticError):
    """Trajectory left the finite range."""


class ConfigurationError(ValueError):
    pass


def _matrix(a, name):
    a = np.array(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def _square(a, name):
    a = _matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DescriptorSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _square(self.A, "A")
        D = _square(self.D, "D")
        B = _matrix(self.B, "B")
        C = _matrix(self.C, "C")
        nx, ny = A.shape[0], D.shape[0]
        if B.shape != (nx, ny) or C.shape != (ny, nx):
            raise DimensionError(
                f"inconsistent blocks: A {A.shape}, B {B.shape}, C {C.shape}, D {D.shape}"
            )
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)


def reduce(sys: DescriptorSystem) -> np.ndarray:
    """Eliminate the algebraic variables: ``J = A - B D^{-1} C``.

    ``D`` is LU-factored; its reciprocal condition number (1-norm estimate)
    must be at least ``1e-12``.
    """
    if sys.D.shape[0] == 0:
        return sys.A.copy()
    with warnings.catch_warnings():
        # singularity is judged by the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(sys.D, check_finite=False)
    anorm = np.linalg.norm(sys.D, 1)
    if anorm == 0.0 or np.any(np.diag(lu) == 0.0):
        raise SingularAlgebraicBlock("D is singular")
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < RCOND_MIN:
        raise SingularAlgebraicBlock(f"D is numerically singular (rcond={rcond:.3g})")
    return sys.A - sys.B @ sla.lu_solve((lu, piv), sys.C, check_finite=False)


@dataclass(frozen=True)
class Mode:
    name: str
    M: np.ndarray
    lo: float
    hi: float


@dataclass(frozen=True)
class ParametricJacobian:
    """Affine Jacobian family ``J(d) = J0 + sum_k d_k M_k``."""

    J0: np.ndarray
    modes: tuple = ()
    d: np.ndarray = field(default=None)

    def __post_init__(self):
        J0 = _square(self.J0, "J0")
        modes = []
        for mode in self.modes:
            M = _square(mode.M, f"M[{mode.name}]")
            if M.shape != J0.shape:
                raise DimensionError(f"mode {mode.name!r} has shape {M.shape}, expected {J0.shape}")
            modes.append(Mode(str(mode.name), M, float(mode.lo), float(mode.hi)))
        d = np.zeros(len(modes)) if self.d is None else np.array(self.d, dtype=float).reshape(-1)
        if d.shape != (len(modes),):
            raise DimensionError(f"d has length {d.size}, expected {len(modes)}")
        object.__setattr__(self, "J0", J0)
        object.__setattr__(self, "modes", tuple(modes))
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.J0.shape[0]

    @property
    def names(self) -> list:
        return [m.name for m in self.modes]

    def with_d(self, d) -> "ParametricJacobian":
        return ParametricJacobian(self.J0, self.modes, d)


def jacobian_at(pj: ParametricJacobian, d=None) -> np.ndarray:
    d = pj.d if d is None else np.asarray(d, dtype=float).reshape(-1)
    if d.shape != (len(pj.modes),):
        raise DimensionError(f"d has length {d.size}, expected {len(pj.modes)}")
    J = pj.J0.copy()
    for dk, mode in zip(d, pj.modes):
        J += dk * mode.M
    return J


def djacobian(pj: ParametricJacobian, k: int) -> np.ndarray:
    """``dJ/dd_k``, which for an affine family is just ``M_k``."""
    if not 0 <= k < len(pj.modes):
        raise IndexError(f"mode index {k} out of range for {len(pj.modes)} modes")
    return pj.modes[k].M.copy()


@dataclass(frozen=True)
class LyapunovResult:
    Phi: SymMatrix
    positive_definite: bool
    residual: float


def solve_lyapunov(J, xi: float = -1.0) -> LyapunovResult:
    """Solve ``-J^T Phi - Phi J + xi I = 0`` by dense vectorization.

    The system is asymptotically stable iff the returned ``Phi`` is positive
    definite (tested with a Cholesky factorization).
    """
    if not xi < 0:
        raise ValueError("xi must be negative")
    J = _square(J, "J")
    n = J.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(J^T P) = (J^T kron I) vec(P), vec(P J) = (I kron J^T) vec(P)
    K = np.kron(J.T, eye) + np.kron(eye, J.T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(K, check_finite=False)
    anorm = np.linalg.norm(K, 1)
    rcond = sla.lapack.dgecon(lu, anorm, norm="1")[0] if anorm > 0 else 0.0
    if rcond < 1e-13:
        raise DegenerateSpectrum(f"Lyapunov operator is singular (rcond={rcond:.3g})")
    P = sla.lu_solve((lu, piv), (xi * eye).reshape(-1), check_finite=False).reshape(n, n)
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(-J.T @ P - P @ J + xi * eye)
    try:
        np.linalg.cholesky(P)
        pd = True
    except np.linalg.LinAlgError:
        pd = False
    return LyapunovResult(SymMatrix(P), pd, float(resid))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    lyapunov_values: np.ndarray
    violations: np.ndarray

    @property
    def n_violations(self) -> int:
        return int(self.violations.size)


def simulate_decay(J, Phi, eta: float, x0, t_end: float, dt: float = 0.01,
                   rel_slack: float = 1e-6) -> Trajectory:
    """Integrate ``dx/dt = J x`` with classical RK4 and track ``L = x^T Phi x``.

    When ``eta < 0`` every sample is checked against the decay envelope
    ``L(t) <= L(0) exp(eta t) (1 + rel_slack)``; indices of failing samples
    are returned in ``violations``.
    """
    J = _square(J, "J")
    P = np.asarray(Phi, dtype=float)
    x = np.asarray(x0, dtype=float).reshape(-1)
    n = J.shape[0]
    if P.shape != (n, n) or x.shape != (n,):
        raise DimensionError("J, Phi and x0 dimensions disagree")
    if not (t_end > 0 and dt > 0 and dt <= t_end):
        raise ValueError("need 0 < dt <= t_end")
    steps = int(np.ceil(t_end / dt - 1e-9))
    h = t_end / steps
    # one RK4 step for a linear system is multiplication by a fixed matrix
    hJ = h * J
    hJ2 = hJ @ hJ
    step = np.eye(n) + hJ + hJ2 / 2 + hJ2 @ hJ / 6 + hJ2 @ hJ2 / 24
    states = np.empty((steps + 1, n))
    states[0] = x
    with np.errstate(over="raise", invalid="raise"):
        try:
            for k in range(steps):
                x = step @ x
                states[k + 1] = x
        except FloatingPointError as exc:
            raise IntegrationDiverged(f"state overflow at step {k + 1}") from exc
    if not np.all(np.isfinite(states)):
        raise IntegrationDiverged("non-finite state")
    times = h * np.arange(steps + 1)
    L = np.einsum("ti,ij,tj->t", states, P, states)
    if eta < 0:
        bound = L[0] * np.exp(eta * times) * (1 + rel_slack)
        violations = np.flatnonzero(L > bound)
    else:
        violations = np.empty(0, dtype=int)
    return Trajectory(times, states, L, violations)


def scenario_gen(pj: ParametricJacobian, count: int, seed: int) -> np.ndarray:
    """``count`` uniform draws of ``d`` inside each mode's ``[lo, hi]``."""
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    lo = np.array([m.lo for m in pj.modes])
    hi = np.array([m.hi for m in pj.modes])
    bad = [m.name for m in pj.modes if m.lo > m.hi]
    if bad:
        raise ConfigurationError(f"lo > hi for modes {bad}")
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((count, len(pj.modes)))


def droop_grid(n: int = 20, buses=(2, 5, 8), seed: int = 0, lo: float = 0.1,
               hi: float = 2.0, gain: float = 0.2, damping=(0.05, 0.15),
               grounding: float = 0.3, names=None) -> ParametricJacobian:
    """Synthetic droop-controlled network in swing form.

    ``n = 2 * nb`` states: bus angles then bus frequencies, with

        J0 = [[0, I], [-(L + g I), -D]]

    where ``L`` is the Laplacian of a random connected graph on ``nb`` buses
    (edge weights in ``[0.5, 1.5]``), ``g`` is ``grounding`` and ``D`` holds
    base damping drawn from ``damping``.  A droop gain at battery bus ``b``
    adds frequency damping: its mode is ``-gain * e e^T`` on the frequency
    state of ``b``.
    """
    if n < 2 or n % 2:
        raise ConfigurationError(f"swing grid needs an even state count, got {n}")
    nb = n // 2
    rng = np.random.default_rng(seed)
    W = np.zeros((nb, nb))
    order = rng.permutation(nb)
    for k in range(1, nb):
        # random spanning tree keeps the graph connected
        a, b = order[k], order[rng.integers(k)]
        W[a, b] = W[b, a] = rng.uniform(0.5, 1.5)
    for _ in range(nb // 2):
        a, b = rng.choice(nb, size=2, replace=False)
        W[a, b] = W[b, a] = rng.uniform(0.5, 1.5)
    L = np.diag(W.sum(axis=1)) - W + grounding * np.eye(nb)
    J0 = np.zeros((n, n))
    J0[:nb, nb:] = np.eye(nb)
    J0[nb:, :nb] = -L
    J0[nb:, nb:] = -np.diag(rng.uniform(*damping, size=nb))
    if names is None:
        names = [f"K{b}" for b in buses]
    modes = []
    for name, b in zip(names, buses):
        if not 0 <= b < nb:
            raise ConfigurationError(f"bus {b} outside 0..{nb - 1}")
        M = np.zeros((n, n))
        M[nb + b, nb + b] = -gain
        modes.append(Mode(name, M, lo, hi))
    return ParametricJacobian(J0, tuple(modes))


def system_from_dict(obj: dict) -> np.ndarray:
    """State matrix from a system document.

    Accepts ``{"J": ...}`` (already reduced) or ``{"A", "B", "C", "D"}``.
    """
    if not isinstance(obj, dict):
        raise ConfigurationError("system document must be a JSON object")
    if "J" in obj:
        return _square(obj["J"], "J")
    missing = [k for k in "ABCD" if k not in obj]
    if missing:
        raise ConfigurationError(f"system document lacks J and {', '.join(missing)}")
    return reduce(DescriptorSystem(obj["A"], obj["B"], obj["C"], obj["D"]))


def parametric_from_dict(obj: dict) -> ParametricJacobian:
    """``{"J0": ..., "params": [{"name", "M", "lo", "hi"}, ...]}``; optional ``"d"``."""
    if not isinstance(obj, dict) or "J0" not in obj:
        raise ConfigurationError("parametric document must be an object with J0")
    modes = []
    for k, p in enumerate(obj.get("params", [])):
        try:
            modes.append(Mode(p.get("name", f"d{k}"), p["M"], p["lo"], p["hi"]))
        except (KeyError, AttributeError, TypeError) as exc:
            raise ConfigurationError(f"params[{k}] needs M, lo and hi") from exc
    return ParametricJacobian(obj["J0"], tuple(modes), obj.get("d"))


def parametric_to_dict(pj: ParametricJacobian) -> dict:
    return {
        "J0": pj.J0.tolist(),
        "params": [{"name": m.name, "M": m.M.tolist(), "lo": m.lo, "hi": m.hi} for m in pj.modes],
        "d": pj.d.tolist(),
    }
