import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stabsens.symkernel import (SQRT2, DimensionError, SymMatrix, basis_stack, smat, smat_array,
                                svec, sym_basis, sym_kron, tri, tri_root)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


@st.composite
def sym_pair(draw):
    n = draw(st.integers(1, 6))
    X = draw(square(n))
    Y = draw(square(n))
    return X + X.T, Y + Y.T


def test_svec_of_2x2():
    np.testing.assert_allclose(svec([[1, 2], [2, 3]]), [1, 2 * SQRT2, 3])


def test_svec_identity_has_ones_on_diagonal_positions():
    np.testing.assert_array_equal(svec(np.eye(3)), [1, 0, 0, 1, 0, 1])


def test_svec_rejects_non_square():
    with pytest.raises(DimensionError):
        svec(np.zeros((2, 3)))


def test_smat_inverts_example():
    np.testing.assert_allclose(smat([1, 2 * SQRT2, 3]).array, [[1, 2], [2, 3]])


def test_smat_zero():
    np.testing.assert_array_equal(smat(np.zeros(6)).array, np.zeros((3, 3)))


@pytest.mark.parametrize("length", [2, 4, 5, 7])
def test_smat_rejects_non_triangular_length(length):
    with pytest.raises(DimensionError):
        smat(np.zeros(length))


def test_tri_and_root():
    assert [tri(n) for n in range(1, 6)] == [1, 3, 6, 10, 15]
    assert all(tri_root(tri(n)) == n for n in range(1, 40))


def test_symmatrix_reads_upper_triangle_and_is_immutable():
    S = SymMatrix([[1.0, 2.0], [99.0, 3.0]])
    np.testing.assert_array_equal(S.array, [[1, 2], [2, 3]])
    with pytest.raises(ValueError):
        S.array[0, 0] = 5.0


def test_stacked_svec_matches_loop():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 3, 3))
    X = X + np.swapaxes(X, 1, 2)
    np.testing.assert_array_equal(svec(X), np.stack([svec(x) for x in X]))
    np.testing.assert_allclose(smat_array(svec(X)), X)


def test_sym_kron_identity_operator():
    for n in (1, 2, 5):
        np.testing.assert_allclose(sym_kron(np.eye(n), np.eye(n)), np.eye(tri(n)))


def test_sym_kron_scalar():
    np.testing.assert_allclose(sym_kron([[2.0]], [[3.0]]), [[6.0]])


def test_sym_kron_matches_direct_products():
    rng = np.random.default_rng(1)
    M, N, X = rng.standard_normal((3, 3, 3))
    X = X + X.T
    direct = svec(0.5 * (N @ X @ M.T + M @ X @ N.T))
    np.testing.assert_allclose(sym_kron(M, N) @ svec(X), direct, atol=1e-13)


def test_sym_kron_shape_mismatch():
    with pytest.raises(DimensionError):
        sym_kron(np.eye(2), np.eye(3))


def test_basis_small_cases():
    assert [b.array.tolist() for b in sym_basis(1)] == [[[1.0]]]
    r = 1 / SQRT2
    expected = [[[1, 0], [0, 0]], [[0, r], [r, 0]], [[0, 0], [0, 1]]]
    np.testing.assert_allclose([b.array for b in sym_basis(2)], expected)


def test_basis_is_orthonormal():
    T = basis_stack(3)
    gram = np.einsum("aij,bji->ab", T, T)
    np.testing.assert_allclose(gram, np.eye(6), atol=1e-15)


def test_svec_gives_basis_coefficients():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((4, 4))
    X = X + X.T
    np.testing.assert_allclose(np.tensordot(svec(X), basis_stack(4), axes=1), X, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(sym_pair())
def test_isometry(pair):
    X, Y = pair
    tr = np.trace(X @ Y)
    assert abs(tr - svec(X) @ svec(Y)) <= 1e-12 * (1 + abs(tr)) * max(1.0, np.abs(X).max() * np.abs(Y).max())


@settings(max_examples=60, deadline=None)
@given(sym_pair())
def test_round_trip(pair):
    X, _ = pair
    np.testing.assert_allclose(smat(svec(X)).array, X, rtol=0, atol=1e-15 * max(1.0, np.abs(X).max()))


@st.composite
def kron_args(draw):
    n = draw(st.integers(1, 5))
    mats = [draw(arrays(np.float64, (n, n), elements=st.floats(-10, 10))) for _ in range(3)]
    a, b = draw(finite), draw(finite)
    return mats, a, b


@settings(max_examples=40, deadline=None)
@given(kron_args())
def test_sym_kron_bilinear(args):
    (M1, M2, N), a, b = args
    lhs = sym_kron(a * M1 + b * M2, N)
    rhs = a * sym_kron(M1, N) + b * sym_kron(M2, N)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)) * 100)


@settings(max_examples=40, deadline=None)
@given(kron_args())
def test_sym_kron_symmetric_in_arguments(args):
    (M, N, _), _, _ = args
    np.testing.assert_allclose(sym_kron(M, N), sym_kron(N, M), atol=1e-12)
