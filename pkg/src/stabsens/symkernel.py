"""Vector-space kernel for real symmetric matrices.

Symmetric matrices are identified with vectors of length n(n+1)/2 through
``svec``, which lists the upper triangle row by row and scales the
off-diagonal entries by sqrt(2).  With that scaling the trace inner product
becomes the Euclidean one, ``trace(X @ Y) == svec(X) @ svec(Y)``.
"""

from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent."""


def tri(n: int) -> int:
    """Length of ``svec`` for an ``n x n`` matrix."""
    return n * (n + 1) // 2


def tri_root(length: int) -> int:
    """Inverse of :func:`tri`; raises if ``length`` is not triangular."""
    n = int((np.sqrt(8 * length + 1) - 1) // 2)
    while tri(n) < length:
        n += 1
    if tri(n) != length or n < 1:
        raise DimensionError(f"length {length} is not of the form n(n+1)/2")
    return n


@lru_cache(maxsize=None)
def _triu_index(n: int):
    rows, cols = np.triu_indices(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    rows.setflags(write=False)
    cols.setflags(write=False)
    scale.setflags(write=False)
    return rows, cols, scale


class SymMatrix:
    """Dense real symmetric matrix.

    Only the upper triangle of the input is read, so symmetry holds by
    construction.  Instances are immutable; ``.array`` returns a read-only
    full matrix.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        upper = np.triu(a)
        a = upper + np.triu(a, 1).T
        a.setflags(write=False)
        self._a = a

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def array(self) -> np.ndarray:
        return self._a

    def __getitem__(self, idx):
        return self._a[idx]

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"SymMatrix({self._a.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, SymMatrix):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self._a, other._a))

    __hash__ = None

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls(np.eye(n))


def svec(X) -> np.ndarray:
    """Scaled upper-triangle vectorization of a symmetric matrix.

    ``X`` may be a :class:`SymMatrix`, a square array (its upper triangle is
    used), or a stack of square arrays with shape ``(..., n, n)``.

    >>> svec([[1.0, 2.0], [2.0, 3.0]]).round(6).tolist()
    [1.0, 2.828427, 3.0]
    """
    a = np.asarray(X, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {a.shape}")
    rows, cols, scale = _triu_index(a.shape[-1])
    return a[..., rows, cols] * scale


def smat(v) -> SymMatrix:
    """Inverse of :func:`svec` for a single vector."""
    return SymMatrix(smat_array(v))


def smat_array(v) -> np.ndarray:
    """Array-valued inverse of :func:`svec`; accepts stacks ``(..., N)``."""
    v = np.asarray(v, dtype=float)
    n = tri_root(v.shape[-1])
    rows, cols, scale = _triu_index(n)
    out = np.zeros(v.shape[:-1] + (n, n))
    vals = v / scale
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def sym_basis(n: int) -> list:
    """Orthonormal basis of symmetric ``n x n`` matrices in ``svec`` order.

    Diagonal positions give ``E_kk``; off-diagonal positions ``k < l`` give
    ``(E_kl + E_lk) / sqrt(2)``.  The ``svec`` of a matrix lists exactly its
    coefficients in this basis.
    """
    if n < 1:
        raise DimensionError("n must be positive")
    return [SymMatrix(B) for B in basis_stack(n)]


@lru_cache(maxsize=16)
def _basis_stack(n: int) -> np.ndarray:
    B = smat_array(np.eye(tri(n)))
    B.setflags(write=False)
    return B


def basis_stack(n: int) -> np.ndarray:
    """The basis of :func:`sym_basis` as a read-only ``(N, n, n)`` array."""
    return _basis_stack(n)


def sym_kron(M, N) -> np.ndarray:
    """Matrix of the symmetrized Kronecker operator on ``svec`` coordinates.

    Returns the ``N x N`` array ``K`` with
    ``K @ svec(X) == svec((N X M^T + M X N^T) / 2)`` for every symmetric ``X``.
    ``M`` and ``N`` are square and of equal size but need not be symmetric.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    if M.shape != N.shape or M.shape[0] != M.shape[1]:
        raise DimensionError(f"sym_kron needs equal square shapes, got {M.shape} and {N.shape}")
    T = basis_stack(M.shape[0])
    NTM = N @ T @ M.T
    # N T M^T + M T N^T = NTM + NTM^T since every T is symmetric
    cols = svec(0.5 * (NTM + np.swapaxes(NTM, -1, -2)))
    return cols.T


def sym_kron_identity(M) -> np.ndarray:
    """Shortcut for ``sym_kron(M, I)``: maps ``svec(X)`` to ``svec((XM^T + MX)/2)``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return sym_kron(M, np.eye(M.shape[0]))
