import dataclasses
import json
import time

import numpy as np
import pytest

from oracles import central_fd_entry, closed_form_stable, fd_columns, random_with_abscissa, skew_dominant
from stabsens.sdpcore import Status, StatusNotOptimal, build_sdp, solve_sdp, stability_index
from stabsens.senscore import (IFTSolver, KKTPoint, Method, NotAtOptimum, SensitivityReport,
                               analytic_report, assemble_dG_dJ, assemble_G, assemble_Gprime,
                               sens_entry, sens_matrix, sens_params)
from stabsens.symkernel import DimensionError, smat_array, svec, tri
from stabsens.sysmodel import Mode, ParametricJacobian, jacobian_at


def eta_of(J):
    return stability_index(J).eta


def random_point(rng, n):
    N = tri(n)
    return KKTPoint(rng.standard_normal(1 + N), rng.standard_normal(3 * N), rng.standard_normal((n, n)))


# G ------------------------------------------------------------------------

def test_G_at_zero_dual():
    rng = np.random.default_rng(0)
    pt = KKTPoint(rng.standard_normal(4), np.zeros(9), rng.standard_normal((2, 2)))
    G = assemble_G(pt)
    assert G.size == 4 + 9
    np.testing.assert_array_equal(G[:4], [-1, 0, 0, 0])
    assert not G[4:].any()


def test_G_vanishes_at_scalar_optimum():
    pt = KKTPoint.from_certificate(stability_index([[-1.0]]))
    assert np.abs(assemble_G(pt)).max() <= 1e-8


def test_G_matches_traces_and_products():
    rng = np.random.default_rng(1)
    pt = random_point(rng, 2)
    sdp = build_sdp(pt.J, pt.eps)
    U = smat_array(pt.upsilon.reshape(3, 3))
    F = sdp.slack(pt.phi)
    g1 = [sum(np.trace(sdp.F(i)[b] @ U[b]) for b in range(3)) - sdp.c[i - 1] for i in range(1, 5)]
    g2 = np.concatenate([svec(0.5 * (F[b] @ U[b] + U[b] @ F[b])) for b in range(3)])
    np.testing.assert_allclose(assemble_G(pt), np.concatenate([g1, g2]), atol=1e-13)


def test_point_dimension_checks():
    with pytest.raises(DimensionError):
        KKTPoint(np.zeros(3), np.zeros(9), np.eye(2))
    with pytest.raises(DimensionError):
        KKTPoint(np.zeros(4), np.zeros(8), np.eye(2))


# G' -----------------------------------------------------------------------

def test_Gprime_structure_and_fd():
    rng = np.random.default_rng(2)
    for _ in range(3):
        pt = random_point(rng, 2)
        Gp = assemble_Gprime(pt)
        assert Gp.shape == (13, 13)
        assert not Gp[:4, :4].any()

        def G_of(psi):
            return assemble_G(KKTPoint(psi[:4], psi[4:], pt.J))

        fd = fd_columns(G_of, np.concatenate([pt.phi, pt.upsilon]))
        assert np.abs(fd - Gp).max() <= 1e-5


def test_Gprime_scalar_by_hand():
    cert = stability_index([[-1.0]])
    pt = KKTPoint.from_certificate(cert)
    s = cert.phi
    u = pt.upsilon
    eta, p = s
    F = [2 * p + eta, p - 1e-6, 1 - p]   # F blocks for J = -1
    f_cols = [[1.0, 2.0], [0.0, 1.0], [0.0, -1.0]]
    hand = np.zeros((5, 5))
    for b in range(3):
        hand[0, 2 + b], hand[1, 2 + b] = f_cols[b]
        hand[2 + b, :2] = u[b] * np.array(f_cols[b])
        hand[2 + b, 2 + b] = F[b]
    np.testing.assert_allclose(assemble_Gprime(pt), hand, atol=1e-14)


# dG/dJ --------------------------------------------------------------------

def test_dG_dJ_zero_point():
    pt = KKTPoint(np.zeros(4), np.zeros(9), np.random.default_rng(3).standard_normal((2, 2)))
    assert not assemble_dG_dJ(pt, 0, 1).any()


def test_dG_dJ_scalar_by_hand():
    cert = stability_index([[-1.0]])
    pt = KKTPoint.from_certificate(cert)
    # d F_2 block 1 / dJ = -2, only the Lyapunov block moves
    u0, p = pt.upsilon[0], pt.phi[1]
    expected = np.array([0.0, -2.0 * u0, -2.0 * p * u0, 0.0, 0.0])
    np.testing.assert_allclose(assemble_dG_dJ(pt, 0, 0), expected, atol=1e-14)


def test_dG_dJ_matches_fd():
    rng = np.random.default_rng(4)
    pt = random_point(rng, 2)
    for i in range(2):
        for j in range(2):
            def G_of(x, i=i, j=j):
                J = pt.J.copy()
                J[i, j] = x[0]
                return assemble_G(KKTPoint(pt.phi, pt.upsilon, J))

            fd = fd_columns(G_of, [pt.J[i, j]])[:, 0]
            assert np.abs(fd - assemble_dG_dJ(pt, i, j)).max() <= 1e-5
    with pytest.raises(IndexError):
        assemble_dG_dJ(pt, 2, 0)


# IFT solves ---------------------------------------------------------------

def test_scalar_sensitivity():
    cert = stability_index([[-1.0]])
    assert abs(sens_entry(cert, [[-1.0]], 0, 0) - 2) <= 1e-6
    np.testing.assert_allclose(sens_matrix(cert), [[2.0]], atol=1e-6)


def test_diagonal_sensitivity():
    J = np.diag([-1.0, -3.0])
    cert = stability_index(J)
    assert abs(sens_entry(cert, J, 0, 0) - 2) <= 1e-6
    assert abs(sens_entry(cert, J, 1, 1)) <= 1e-6
    assert abs(central_fd_entry(eta_of, J, 0, 0) - 2) <= 1e-4
    assert abs(central_fd_entry(eta_of, J, 1, 1)) <= 1e-4


def test_symmetric_optimum_is_flagged_but_gradient_exact():
    J = np.array([[-1.0, 0.3], [0.3, -3.0]])
    cert = stability_index(J)
    solver = IFTSolver.at(cert)
    assert solver.degenerate
    v = np.linalg.eigh(J)[1][:, -1]
    np.testing.assert_allclose(sens_matrix(cert, solver=solver), 2 * np.outer(v, v), atol=1e-6)


def test_random_5x5_against_central_fd():
    rng = np.random.default_rng(5)
    J = skew_dominant(rng, 5)
    cert = stability_index(J)
    S = sens_matrix(cert)
    for i in range(5):
        for j in range(5):
            fd = central_fd_entry(eta_of, J, i, j)
            assert abs(S[i, j] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_gradient_against_closed_form():
    rng = np.random.default_rng(6)
    for n in (2, 4, 8):
        J = skew_dominant(rng, n)
        cert = stability_index(J)
        solver = IFTSolver.at(cert)
        assert not solver.degenerate and solver.cond_estimate < 1e9
        _, grad = closed_form_stable(J)
        np.testing.assert_allclose(sens_matrix(cert, solver=solver), grad, atol=1e-9)


def test_matrix_equals_entrywise():
    rng = np.random.default_rng(7)
    J = skew_dominant(rng, 4)
    cert = stability_index(J)
    S = sens_matrix(cert, J)
    entry = np.array([[sens_entry(cert, J, i, j) for j in range(4)] for i in range(4)])
    np.testing.assert_allclose(S, entry, atol=1e-12, rtol=0)


def test_matrix_cheaper_than_entrywise():
    J = skew_dominant(np.random.default_rng(8), 8)
    cert = stability_index(J)
    t0 = time.perf_counter()
    sens_matrix(cert, J)
    t_matrix = time.perf_counter() - t0
    t0 = time.perf_counter()
    for i in range(8):
        for j in range(8):
            sens_entry(cert, J, i, j)
    assert t_matrix < time.perf_counter() - t0


def test_superposition():
    rng = np.random.default_rng(9)
    cert = stability_index(skew_dominant(rng, 4))
    solver = IFTSolver.at(cert)
    pt = solver.point
    r1, r2 = assemble_dG_dJ(pt, 0, 1), assemble_dG_dJ(pt, 2, 3)
    a, b = 0.7, -1.9
    np.testing.assert_allclose(solver.solve(-(a * r1 + b * r2)),
                               a * solver.solve(-r1) + b * solver.solve(-r2), atol=1e-10)


def test_complementarity_at_optimum():
    rng = np.random.default_rng(10)
    for target in (-0.4, 0.2):
        cert = stability_index(random_with_abscissa(rng, 5, target))
        pt = KKTPoint.from_certificate(cert)
        assert np.abs(assemble_G(pt)[pt.phi.size:]).max() <= 1e-7


# parameters ---------------------------------------------------------------

def test_scalar_chain_rule():
    pj = ParametricJacobian([[-1.0]], (Mode("k", [[1.0]], -0.5, 0.5),))
    cert = stability_index(jacobian_at(pj, [0.0]))
    np.testing.assert_allclose(sens_params(cert, pj), [2.0], atol=1e-6)


def test_zero_mode_gives_zero():
    rng = np.random.default_rng(11)
    J0 = skew_dominant(rng, 4)
    pj = ParametricJacobian(J0, (Mode("z", np.zeros((4, 4)), 0, 1), Mode("r", rng.standard_normal((4, 4)), 0, 1)))
    cert = stability_index(J0)
    assert sens_params(cert, pj)[0] == 0.0


def test_params_against_central_fd_and_chain_rule():
    rng = np.random.default_rng(12)
    J0 = skew_dominant(rng, 5)
    M = 0.1 * rng.standard_normal((2, 5, 5))
    pj = ParametricJacobian(J0, (Mode("a", M[0], 0, 1), Mode("b", M[1], 0, 1)))
    d = np.array([0.3, 0.6])
    cert = stability_index(jacobian_at(pj, d))
    g = sens_params(cert, pj)
    dJ = sens_matrix(cert)
    np.testing.assert_allclose(g, [np.sum(dJ * M[k]) for k in range(2)], atol=1e-12, rtol=0)
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1e-6
        fd = (eta_of(jacobian_at(pj, d + e)) - eta_of(jacobian_at(pj, d - e))) / 2e-6
        assert abs(g[k] - fd) <= 1e-4 * max(1.0, abs(fd))


# gates and reports --------------------------------------------------------

def test_gate_rejects_non_optimal_status():
    cert = solve_sdp(build_sdp(skew_dominant(np.random.default_rng(13), 4)), max_iter=2)
    with pytest.raises(StatusNotOptimal):
        sens_matrix(cert)


def test_gate_rejects_points_off_the_optimum():
    cert = stability_index([[-1.0]])
    moved = dataclasses.replace(cert, upsilon=cert.upsilon + 1e-3)
    with pytest.raises(NotAtOptimum):
        sens_entry(moved, [[-1.0]], 0, 0)


def test_mismatched_J_rejected():
    cert = stability_index([[-1.0]])
    with pytest.raises(ValueError):
        sens_entry(cert, [[-2.0]], 0, 0)


def test_report_schema():
    pj = ParametricJacobian([[-1.0]], (Mode("Kbp", [[1.0]], 0, 1),))
    report = analytic_report(stability_index(jacobian_at(pj)), pj)
    doc = json.loads(report.to_json())
    assert doc["method"] == "analytic"
    assert doc["d_eta_d_J"][0] == pytest.approx([2.0])
    assert doc["d_eta_d_params"]["Kbp"] == pytest.approx(2.0)
    assert doc["degenerate"] is False and doc["cond_estimate"] > 0 and doc["elapsed_s"] >= 0
    assert SensitivityReport(Method.CENTRAL_FD).to_dict()["method"] == "central-fd"
