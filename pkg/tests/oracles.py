"""Independent reference computations and instance families shared by the tests."""

import numpy as np
from scipy.linalg import solve_continuous_lyapunov


def power_lambda_max(A, iters=20000, tol=1e-14, seed=0):
    """Largest eigenvalue of a symmetric matrix by shifted power iteration."""
    A = np.asarray(A, dtype=float)
    shift = np.abs(A).sum(axis=1).max()  # Gershgorin bound makes A + shift I PSD
    B = A + shift * np.eye(len(A))
    x = np.random.default_rng(seed).standard_normal(len(A))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = B @ x
        new = x @ y
        x = y / np.linalg.norm(y)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    # Rayleigh quotient refinement
    return float(x @ A @ x)


def spectral_abscissa(J):
    return float(np.linalg.eigvals(J).real.max())


def closed_form_stable(J):
    """Index and gradient of a stable ``J`` from two Lyapunov equations.

    With ``J^T P + P J = -I`` and ``u`` the top eigenvector of ``P``:
    ``eta = -1/lambda_max(P)`` and ``d eta / dJ = (2/lambda^2) P W_u`` with
    ``W_u`` the Gramian solving ``J W + W J^T = -u u^T``.
    """
    n = len(J)
    P = solve_continuous_lyapunov(J.T, -np.eye(n))
    w, V = np.linalg.eigh(P)
    u = V[:, -1]
    W = solve_continuous_lyapunov(J, -np.outer(u, u))
    return -1.0 / w[-1], 2.0 * P @ W / w[-1] ** 2


def random_symmetric_stable(rng, n):
    A = rng.standard_normal((n, n))
    A = 0.5 * (A + A.T)
    return A - (np.linalg.eigvalsh(A).max() + rng.uniform(0.05, 2.0)) * np.eye(n)


def random_with_abscissa(rng, n, target):
    """Gaussian matrix shifted so its spectral abscissa equals ``target``."""
    A = rng.standard_normal((n, n))
    return A - (spectral_abscissa(A) - target) * np.eye(n)


def skew_dominant(rng, n=10):
    """Stable non-symmetric family with strictly complementary certificates."""
    K = rng.standard_normal((n, n)) * 4.0 / np.sqrt(n)
    K = 0.5 * (K - K.T)
    return K - np.diag(rng.uniform(0.3, 0.6, n)) + 0.1 * rng.standard_normal((n, n)) / np.sqrt(n)


def central_fd_entry(eta_of, J, i, j, rel=1e-6):
    h = rel * max(1.0, abs(J[i, j]))
    E = np.zeros_like(J)
    E[i, j] = h
    return (eta_of(J + E) - eta_of(J - E)) / (2 * h)


def fd_columns(f, x, h=1e-7):
    """Central-difference Jacobian of ``f`` at ``x``, column by column."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=1)
