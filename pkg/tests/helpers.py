"""Sampling and comparison helpers shared by the margin and acceptance tests."""
import math

import numpy as np

from pivotal.margin import KINDS, default_cap, lp_margin, margin_bounds, margin_oracle
from pivotal.mechanics import solve_contact_forces
from pivotal.objects import PoseState, contact_geometry


def feasible_samples(obj, n, rng):
    """``n`` random (geometry, control) pairs whose nominal normal forces are both positive."""
    out = []
    while len(out) < n:
        theta = rng.uniform(0.0, 0.5 * math.pi)
        p = rng.uniform(0.0, obj.profile.face_length)
        f_n = rng.uniform(0.0, obj.f_u)
        u = (f_n, rng.uniform(-1.0, 1.0) * obj.mu_P * f_n)
        geom = contact_geometry(obj, PoseState(theta, p))
        F = solve_contact_forces(geom, u, obj.m, 0.0, obj.mu_A, obj.g_mag)
        if F.f_nA > 0.0 and F.f_nB > 0.0:
            out.append((geom, u))
    return out


def oracle_gap(obj, samples):
    """Largest |lp_margin - margin_oracle| over samples, both kinds and directions."""
    worst = 0.0
    for kind in KINDS:
        cap = default_cap(obj, kind)
        for geom, u in samples:
            mb = margin_bounds(geom, u, obj, kind)
            for d in ("+", "-"):
                lp = lp_margin(mb, d, cap).xi
                orc = margin_oracle(geom, u, obj, kind, d, cap).xi
                worst = max(worst, abs(lp - orc))
    return worst


def max_abs(values):
    return float(np.max(np.abs(np.asarray(values, dtype=float)), initial=0.0))


# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE = {}


def report(n, passed, title, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {title} | {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return passed
