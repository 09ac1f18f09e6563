"""Frictional stability margins under mass or CoM uncertainty.

The scalar uncertainty ``xi`` is, for ``kind="mass"``, the weight removed from
the object in newtons (positive means lighter) and, for ``kind="com"``, the
horizontal world-frame CoM shift in metres (positive means toward +x).
Both contact normal forces are affine in ``xi``, so the set of admissible
``xi`` is an interval described by one row ``a * xi <= b`` per contact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mechanics import ContactForces, solve_contact_forces, wall_denominator
from .objects import ContactGeometry, ObjectParams, PoseState, contact_geometry

KINDS = ("mass", "com")
DIRECTIONS = ("+", "-")
ZERO_TOL = 1e-10
FEAS_TOL = 1e-9  # same as the static feasibility test and solver bound slack
ORACLE_TOL = 1e-9


@dataclass(frozen=True)
class MarginRow:
    a: float
    b: float
    source: str

    @property
    def crossing(self) -> float:
        """Value of xi at which this contact's normal force vanishes."""
        return self.b / self.a if self.a != 0.0 else math.inf


@dataclass(frozen=True)
class MarginBounds:
    kind: str
    rows: tuple[MarginRow, ...]

    def row(self, source: str) -> Optional[MarginRow]:
        for r in self.rows:
            if r.source == source:
                return r
        return None


@dataclass(frozen=True)
class LpResult:
    xi: float
    active: Optional[str]
    multipliers: np.ndarray  # rows: contact-A, contact-B, xi >= 0, cap
    infeasible: bool = False


@dataclass(frozen=True)
class OracleResult:
    xi: float
    infeasible: bool = False


def default_cap(obj: ObjectParams, kind: str) -> float:
    if kind == "mass":
        return 10.0 * obj.weight
    if kind == "com":
        return 10.0 * obj.profile.reach
    raise ValueError(f"unknown margin kind {kind!r}")


def _nominal(geom, u, obj) -> ContactForces:
    return solve_contact_forces(geom, u, obj.m, 0.0, obj.mu_A, obj.g_mag)


def mass_margin_bounds(geom: ContactGeometry, u, obj: ObjectParams) -> MarginBounds:
    F = _nominal(geom, u, obj)
    k_a = geom.C[0] / wall_denominator(geom, obj.mu_A)
    rows = []
    # with the CoM above B the weight has no moment arm, so A is never lost
    if abs(geom.C[0]) >= ZERO_TOL:
        rows.append(MarginRow(float(k_a), F.f_nA, "contact-A"))
    rows.append(MarginRow(float(1.0 - obj.mu_A * k_a), F.f_nB, "contact-B"))
    return MarginBounds("mass", tuple(rows))


def com_margin_bounds(geom: ContactGeometry, u, obj: ObjectParams) -> MarginBounds:
    F = _nominal(geom, u, obj)
    slope = obj.weight / wall_denominator(geom, obj.mu_A)
    return MarginBounds("com", (
        MarginRow(float(-slope), F.f_nA, "contact-A"),
        MarginRow(float(obj.mu_A * slope), F.f_nB, "contact-B"),
    ))


def margin_bounds(geom: ContactGeometry, u, obj: ObjectParams, kind: str) -> MarginBounds:
    if kind == "mass":
        return mass_margin_bounds(geom, u, obj)
    if kind == "com":
        return com_margin_bounds(geom, u, obj)
    raise ValueError(f"unknown margin kind {kind!r}")


def _sign(direction: str) -> float:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")
    return 1.0 if direction == "+" else -1.0


def lp_margin(bounds: MarginBounds, direction: str, cap: float) -> LpResult:
    """Closed-form solution of ``max xi s.t. sign*a_j*xi <= b_j, 0 <= xi <= cap``.

    Ties between the contact rows go to contact-A. The returned multipliers
    satisfy the LP's KKT conditions; for degenerate vertices they are one of
    several valid choices.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    sign = _sign(direction)
    w = np.zeros(4)
    for r in bounds.rows:
        if r.b < -FEAS_TOL:
            return LpResult(0.0, None, w, infeasible=True)
    best, active, slot = cap, "cap", 3
    for r in bounds.rows:
        c = sign * r.a
        if c <= 0.0:
            continue
        bound = max(r.b, 0.0) / c
        if bound < best:
            best, active = bound, r.source
            slot = 0 if r.source == "contact-A" else 1
    if active == "cap":
        w[3] = 1.0
    else:
        w[slot] = 1.0 / (sign * bounds.row(active).a)
    return LpResult(float(best), active, w)


def _shifted_forces(geom, u, obj: ObjectParams, kind: str, xi: float) -> ContactForces:
    if kind == "mass":
        return solve_contact_forces(geom, u, obj.m - xi / obj.g_mag, 0.0, obj.mu_A, obj.g_mag)
    return solve_contact_forces(geom, u, obj.m, xi, obj.mu_A, obj.g_mag)


def margin_oracle(geom: ContactGeometry, u, obj: ObjectParams, kind: str, direction: str,
                  cap: Optional[float] = None, tol: float = ORACLE_TOL) -> OracleResult:
    """Largest admissible shift found by bisection on the contact-force sign test.

    Independent of the row algebra: each probe re-solves the perturbed
    equilibrium and checks ``f_nA >= 0`` and ``f_nB >= 0``.
    """
    sign = _sign(direction)
    cap = default_cap(obj, kind) if cap is None else cap

    def ok(xi):
        F = _shifted_forces(geom, u, obj, kind, sign * xi)
        return F.f_nA >= -FEAS_TOL and F.f_nB >= -FEAS_TOL

    if not ok(0.0):
        return OracleResult(0.0, infeasible=True)
    if ok(cap):
        return OracleResult(cap)
    lo, hi = 0.0, cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return OracleResult(lo)


@dataclass
class MarginProfile:
    kind: str
    cap: float
    bounds: list[MarginBounds]
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    active_plus: list = field(default_factory=list)
    active_minus: list = field(default_factory=list)
    infeasible: np.ndarray = None

    @property
    def worst_plus(self) -> float:
        return float(np.min(self.xi_plus)) if len(self.xi_plus) else math.nan

    @property
    def worst_minus(self) -> float:
        return float(np.min(self.xi_minus)) if len(self.xi_minus) else math.nan

    @property
    def cap_active(self) -> bool:
        """True when a reported worst-case value is the artificial cap."""
        return any(
            len(x) and np.isclose(np.min(x), self.cap) for x in (self.xi_plus, self.xi_minus)
        )

    def crossings(self, source: str) -> np.ndarray:
        out = []
        for b in self.bounds:
            r = b.row(source)
            out.append(r.crossing if r is not None else math.inf)
        return np.array(out)


def profile_from_steps(obj: ObjectParams, thetas: Sequence[float], p_ys: Sequence[float],
                       controls: np.ndarray, kind: str, cap: Optional[float] = None) -> MarginProfile:
    cap = default_cap(obj, kind) if cap is None else cap
    bounds, xp, xm, ap, am, bad = [], [], [], [], [], []
    for th, p, u in zip(thetas, p_ys, np.asarray(controls).reshape(-1, 2)):
        geom = contact_geometry(obj, PoseState(float(th), float(p)))
        mb = margin_bounds(geom, u, obj, kind)
        plus, minus = lp_margin(mb, "+", cap), lp_margin(mb, "-", cap)
        bounds.append(mb)
        xp.append(plus.xi)
        xm.append(minus.xi)
        ap.append(plus.active)
        am.append(minus.active)
        bad.append(plus.infeasible or minus.infeasible)
    return MarginProfile(kind, cap, bounds, np.array(xp), np.array(xm), ap, am, np.array(bad, dtype=bool))


def margin_profile(traj, obj: ObjectParams, kind: str, cap: Optional[float] = None) -> MarginProfile:
    """Per-step margins of a trajectory in both directions."""
    n = len(traj.f_nP)
    return profile_from_steps(obj, traj.theta[:n], traj.p_y[:n], traj.controls, kind, cap)
