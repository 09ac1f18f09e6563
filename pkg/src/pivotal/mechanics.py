"""Quasi-static contact mechanics of the pivoting object.

Sign conventions: gravity acts along -y with magnitude ``m_eff * g_mag``;
the wall normal at A points along +x and the floor normal at B along +y.
While pivoting, A slides down the wall and B slides away from it, so the
slipping friction forces are ``f_tA = mu_A f_nA`` and ``f_tB = -mu_B f_nB``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objects import G_MAG, ContactGeometry

SINGULAR_TOL = 1e-10


class SingularConfiguration(ArithmeticError):
    pass


@dataclass(frozen=True)
class ContactForces:
    f_nA: float
    f_tA: float
    f_nB: float
    f_tB: float
    f_nP: float
    f_tP: float
    f_x: float
    f_y: float

    @classmethod
    def from_body(cls, geom: ContactGeometry, f_nA, f_tA, f_nB, f_tB, f_nP, f_tP) -> "ContactForces":
        f_x, f_y = geom.R @ np.array([f_nP, f_tP])
        return cls(f_nA, f_tA, f_nB, f_tB, f_nP, f_tP, float(f_x), float(f_y))


@dataclass(frozen=True)
class SlipSlacks:
    """Per-step slip displacements split into nonnegative parts."""

    pdot_A_plus: float = 0.0
    pdot_A_minus: float = 0.0
    pdot_B_plus: float = 0.0
    pdot_B_minus: float = 0.0
    pdot_y_plus: float = 0.0
    pdot_y_minus: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.pdot_A_plus, self.pdot_A_minus, self.pdot_B_plus,
                         self.pdot_B_minus, self.pdot_y_plus, self.pdot_y_minus])


def manipulator_moment(geom: ContactGeometry, F: ContactForces) -> float:
    return float(geom.P[0] * F.f_y - geom.P[1] * F.f_x)


def equilibrium_residual(geom: ContactGeometry, F: ContactForces, m_eff: float, r: float = 0.0,
                         g_mag: float = G_MAG) -> np.ndarray:
    """Force-x, force-y and moment-about-B residuals; all zero in equilibrium."""
    W = m_eff * g_mag
    A, C = geom.A, geom.C
    fx = F.f_nA + F.f_tB + F.f_x
    fy = F.f_tA + F.f_nB - W + F.f_y
    mz = A[0] * F.f_tA - A[1] * F.f_nA - (C[0] + r) * W + manipulator_moment(geom, F)
    return np.array([fx, fy, mz])


def friction_cone_residuals(F: ContactForces, mu) -> np.ndarray:
    """Cone slacks at A, B, P followed by the A and B normal forces; feasible iff all >= 0."""
    mu_A, mu_B, mu_P = mu
    return np.array([
        mu_A * F.f_nA - abs(F.f_tA),
        mu_B * F.f_nB - abs(F.f_tB),
        mu_P * F.f_nP - abs(F.f_tP),
        F.f_nA,
        F.f_nB,
    ])


def slip_equalities(F: ContactForces, mu) -> np.ndarray:
    mu_A, mu_B = mu[0], mu[1]
    return np.array([F.f_tA - mu_A * F.f_nA, F.f_tB + mu_B * F.f_nB])


def slip_complementarity_residuals(F: ContactForces, s: SlipSlacks, mu) -> list[tuple[float, float]]:
    """Pairs (slip rate, cone slack) for A, B and the P face, in +/- order."""
    mu_A, mu_B, mu_P = mu
    return [
        (s.pdot_A_plus, mu_A * F.f_nA - F.f_tA),
        (s.pdot_A_minus, mu_A * F.f_nA + F.f_tA),
        (s.pdot_B_plus, mu_B * F.f_nB - F.f_tB),
        (s.pdot_B_minus, mu_B * F.f_nB + F.f_tB),
        (s.pdot_y_plus, mu_P * F.f_nP - F.f_tP),
        (s.pdot_y_minus, mu_P * F.f_nP + F.f_tP),
    ]


def wall_denominator(geom: ContactGeometry, mu_A: float) -> float:
    return float(mu_A * geom.A[0] - geom.A[1])


def solve_contact_forces(geom: ContactGeometry, u, m_eff: float, r: float, mu_A: float,
                         g_mag: float = G_MAG) -> ContactForces:
    """Environment forces that balance the object for a given manipulator force.

    A slips (``f_tA = mu_A f_nA``) and ``f_nA`` follows from the moment about
    B alone. The force balance then fixes ``f_nB`` and the floor friction
    ``f_tB``; on a nominal trajectory that friction equals ``-mu_B f_nB``.
    Under perturbed mass or CoM it absorbs the imbalance, which keeps the
    result an exact equilibrium.
    """
    f_nP, f_tP = float(u[0]), float(u[1])
    den = wall_denominator(geom, mu_A)
    if abs(den) < SINGULAR_TOL:
        raise SingularConfiguration(f"mu_A*A_x - A_y = {den:.3e} at theta={geom.theta}")
    f_x, f_y = geom.R @ np.array([f_nP, f_tP])
    W = m_eff * g_mag
    moment_P = geom.P[0] * f_y - geom.P[1] * f_x
    f_nA = ((geom.C[0] + r) * W - moment_P) / den
    f_tA = mu_A * f_nA
    f_nB = W - f_y - f_tA
    f_tB = -f_nA - f_x
    return ContactForces(float(f_nA), float(f_tA), float(f_nB), float(f_tB), f_nP, f_tP, float(f_x), float(f_y))
