"""Lyapunov-SDP stability index with analytic first-order sensitivities."""

from .sdpcore import (StabilityCertificate, Status, StatusNotOptimal, build_sdp, check_constraint,
                      solve_sdp, stability_index)
from .senscore import (IFTSolver, KKTPoint, SensitivityReport, analytic_report, assemble_dG_dJ,
                       assemble_G, assemble_Gprime, sens_entry, sens_matrix, sens_params)
from .sysmodel import (DescriptorSystem, Mode, ParametricJacobian, droop_grid, jacobian_at, reduce,
                       scenario_gen, simulate_decay, solve_lyapunov)

__all__ = [
    "DescriptorSystem", "IFTSolver", "KKTPoint", "Mode", "ParametricJacobian", "SensitivityReport",
    "StabilityCertificate", "Status", "StatusNotOptimal", "analytic_report", "assemble_G",
    "assemble_Gprime", "assemble_dG_dJ", "build_sdp", "check_constraint", "droop_grid",
    "jacobian_at", "reduce", "scenario_gen", "sens_entry", "sens_matrix", "sens_params",
    "simulate_decay", "solve_lyapunov", "solve_sdp", "stability_index",
]
