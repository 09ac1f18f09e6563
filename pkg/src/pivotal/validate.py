"""Static feasibility of planned trajectories under perturbed mass or CoM.

A step passes when the contact forces that balance the object with the
planned manipulator force keep both normal forces nonnegative. A sweep
mirrors planning with an assumed mass and executing with the true one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .mechanics import solve_contact_forces
from .objects import ContactGeometry, ObjectParams

FEAS_TOL = 1e-9


def static_feasible(geom: ContactGeometry, u, obj: ObjectParams, eps: float = 0.0, r: float = 0.0,
                    tol: float = FEAS_TOL) -> bool:
    """True iff both normal forces stay >= -tol with weight ``m g + eps`` and CoM shift ``r``.

    ``eps`` is added weight in newtons (negative means lighter).
    """
    F = solve_contact_forces(geom, u, obj.m + eps / obj.g_mag, r, obj.mu_A, obj.g_mag)
    return F.f_nA >= -tol and F.f_nB >= -tol


@dataclass(frozen=True)
class SweepRow:
    label: str
    eps: float
    r: float
    passed: bool
    first_failure: Optional[int]
    failures: int


def trajectory_feasible(traj, obj: ObjectParams, eps: float = 0.0, r: float = 0.0,
                        tol: float = FEAS_TOL) -> tuple[bool, Optional[int], int]:
    bad = [k for k in range(traj.N)
           if not static_feasible(traj.geometry(obj, k), traj.controls[k], obj, eps, r, tol)]
    return not bad, (bad[0] if bad else None), len(bad)


def perturb_sweep(traj, obj: ObjectParams, eps_list: Iterable[float] = (), r_list: Iterable[float] = (),
                  tol: float = FEAS_TOL) -> list[SweepRow]:
    """One row per perturbation: added weight (N) from ``eps_list``, CoM shift (m) from ``r_list``."""
    rows = []
    for eps in eps_list:
        ok, first, n = trajectory_feasible(traj, obj, float(eps), 0.0, tol)
        rows.append(SweepRow(f"eps={eps:+.4f} N", float(eps), 0.0, ok, first, n))
    for r in r_list:
        ok, first, n = trajectory_feasible(traj, obj, 0.0, float(r), tol)
        rows.append(SweepRow(f"r={r * 1e3:+.3f} mm", 0.0, float(r), ok, first, n))
    return rows


def mass_sweep(traj, obj: ObjectParams, true_masses_g: Sequence[float], tol: float = FEAS_TOL) -> list[SweepRow]:
    """Plan at ``obj.m``, execute at each true mass; perturbation is ``(m_true - m) g``."""
    rows = []
    for m_g in true_masses_g:
        eps = (m_g * 1e-3 - obj.m) * obj.g_mag
        ok, first, n = trajectory_feasible(traj, obj, eps, 0.0, tol)
        rows.append(SweepRow(f"m={m_g:g} g", eps, 0.0, ok, first, n))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["perturbation,eps_N,r_m,passed,first_failing_step,failing_steps"]
    for s in rows:
        first = "" if s.first_failure is None else str(s.first_failure)
        lines.append(f"{s.label},{s.eps:.9g},{s.r:.9g},{int(s.passed)},{first},{s.failures}")
    return "\n".join(lines) + "\n"


def sweep_summary(rows: Sequence[SweepRow]) -> str:
    width = max([len(s.label) for s in rows] + [12])
    out = [f"{'perturbation':<{width}}  result  first fail"]
    for s in rows:
        first = "-" if s.first_failure is None else str(s.first_failure)
        out.append(f"{s.label:<{width}}  {'pass' if s.passed else 'FAIL':<6}  {first}")
    out.append(f"{sum(s.passed for s in rows)}/{len(rows)} passed")
    return "\n".join(out)


def margin_interval(traj, obj: ObjectParams) -> tuple[float, float]:
    """Largest lighter / heavier weight change (N) the whole trajectory tolerates."""
    from .margin import margin_profile

    prof = margin_profile(traj, obj, "mass")
    return float(np.min(prof.xi_plus)), float(np.min(prof.xi_minus))
