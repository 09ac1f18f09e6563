"""End-to-end planning: nominal solve, optional robust solve, margin summary."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from .margin import KINDS, default_cap, margin_profile
from .objects import ObjectParams
from .ocp import OcpSpec, build_nominal, extract_trajectory
from .robust import build_robust, embedded_margins, kkt_blocks, max_kkt_residual
from .solver import SolveReport, SolverOptions, solve
from .trajectory import Trajectory

log = logging.getLogger(__name__)

MODES = ("nominal", "robust-mass", "robust-com")


class PlanningError(RuntimeError):
    def __init__(self, message: str, report: Optional[SolveReport] = None):
        super().__init__(message)
        self.report = report


@dataclass
class PlanResult:
    trajectory: Trajectory
    report: SolveReport
    nominal_report: SolveReport
    problem: object


def margin_summary(traj: Trajectory, obj: ObjectParams) -> dict:
    out = {}
    for kind in KINDS:
        prof = margin_profile(traj, obj, kind)
        out[kind] = {
            "worst_plus": prof.worst_plus,
            "worst_minus": prof.worst_minus,
            "cap": prof.cap,
            "cap_active": bool(prof.cap_active),
            "infeasible_steps": int(prof.infeasible.sum()),
        }
    return out


def plan(obj: ObjectParams, spec: Optional[OcpSpec] = None, mode: str = "nominal", alpha: float = 0.001,
         opts: Optional[SolverOptions] = None, cap: Optional[float] = None,
         effort_weight: float = 0.0) -> PlanResult:
    """Solve the nominal problem and, for robust modes, the robust one warm-started from it."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    spec = spec or OcpSpec()
    opts = opts or SolverOptions()
    prob = build_nominal(obj, spec)
    rep_n = solve(prob, opts)
    log.info("nominal: %s in %.2fs", rep_n.status, rep_n.wall_time)
    if not rep_n.converged:
        raise PlanningError(f"nominal solve failed: {rep_n.status} at stage {rep_n.failed_stage}", rep_n)
    rep = rep_n
    if mode != "nominal":
        kind = mode.split("-", 1)[1]
        prob = build_robust(obj, spec, kind, alpha, cap, effort_weight, x_warm=rep_n.x)
        rep = solve(prob, opts)
        log.info("%s: %s in %.2fs", mode, rep.status, rep.wall_time)
        if not rep.converged:
            raise PlanningError(f"{mode} solve failed: {rep.status} at stage {rep.failed_stage}", rep)
    traj = extract_trajectory(prob, rep.x, rep)
    traj.metadata["margins"] = margin_summary(traj, obj)
    if mode != "nominal":
        em = embedded_margins(prob, rep.x)
        blocks = kkt_blocks(prob, rep.x, traj)
        traj.metadata["robust"] = {
            "kind": prob.meta["kind"],
            "alpha": alpha,
            "cap": prob.meta["cap"] if cap is None else cap,
            "default_cap": default_cap(obj, prob.meta["kind"]),
            "t_plus": em["t_plus"],
            "t_minus": em["t_minus"],
            "xi_plus": em["xi_plus"].tolist(),
            "xi_minus": em["xi_minus"].tolist(),
            "max_kkt_residual": max(max_kkt_residual(b) for b in blocks),
            "nominal_solver": rep_n.summary(),
        }
    return PlanResult(traj, rep, rep_n, prob)
