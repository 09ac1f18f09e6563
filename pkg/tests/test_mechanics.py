import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pivotal.mechanics import (
    ContactForces, SingularConfiguration, SlipSlacks, equilibrium_residual, friction_cone_residuals,
    slip_complementarity_residuals, slip_equalities, solve_contact_forces, wall_denominator,
)
from pivotal.objects import BUNDLED, ContactGeometry, PoseState, contact_geometry, load_object


def _random_geom(rng, obj):
    return contact_geometry(obj, PoseState(rng.uniform(0, math.pi / 2), rng.uniform(0, obj.profile.face_length)))


def test_round_trip_ten_thousand_points():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(10_000):
        obj = load_object(BUNDLED[i % 4])
        geom = _random_geom(rng, obj)
        u = (rng.uniform(0, obj.f_u), rng.uniform(-1, 1) * obj.mu_P * obj.f_u)
        m = obj.m * rng.uniform(0.2, 3.0)
        r = rng.uniform(-0.02, 0.02)
        F = solve_contact_forces(geom, u, m, r, obj.mu_A, obj.g_mag)
        worst = max(worst, float(np.max(np.abs(equilibrium_residual(geom, F, m, r, obj.g_mag)))))
    assert worst < 1e-10


def test_solution_slips_at_A(gear1):
    geom = contact_geometry(gear1, PoseState(0.4, 0.006))
    F = solve_contact_forces(geom, (0.5, 0.1), gear1.m, 0.0, gear1.mu_A)
    assert F.f_tA == pytest.approx(gear1.mu_A * F.f_nA)
    assert slip_equalities(F, gear1.mu)[0] == pytest.approx(0.0)


def test_lying_flat_hand_calculation(gear1):
    # theta = 0, no finger force: wall contact carries nothing, floor carries the weight
    geom = contact_geometry(gear1, PoseState(0.0, 0.005))
    W = gear1.weight
    F = solve_contact_forces(geom, (0.0, 0.0), gear1.m, 0.0, gear1.mu_A)
    # moment about B: -C_x W = -w f_nA (A at height w, f_tA has no arm)
    assert F.f_nA == pytest.approx(-0.042 * W / 0.020)
    assert F.f_nB == pytest.approx(W - gear1.mu_A * F.f_nA)


def test_manipulator_moment_independent_of_theta(gear1):
    u = (0.7, -0.2)
    for theta in np.linspace(0, math.pi / 2, 7):
        geom = contact_geometry(gear1, PoseState(theta, 0.004))
        F = ContactForces.from_body(geom, 0, 0, 0, 0, *u)
        mz = geom.P[0] * F.f_y - geom.P[1] * F.f_x
        assert mz == pytest.approx(0.084 * u[1] + 0.004 * u[0], abs=1e-14)


def test_wall_denominator_negative_on_domain(gear1):
    for theta in np.linspace(0, math.pi / 2, 50):
        assert wall_denominator(contact_geometry(gear1, PoseState(theta, 0.0)), gear1.mu_A) < 0


def test_singular_configuration_raises():
    # mu_A A_x = A_y cannot occur on [0, pi/2]; build such a geometry by hand
    geom = ContactGeometry(theta=0.0, A=np.array([0.1, 0.03]), B=np.zeros(2), P=np.array([0.08, 0.0]),
                           C=np.array([0.04, 0.01]), R=np.eye(2))
    with pytest.raises(SingularConfiguration):
        solve_contact_forces(geom, (0.0, 0.0), 0.1, 0.0, 0.3)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(-5, 5), st.floats(0, 5), st.floats(-5, 5))
def test_cone_residuals(f_nA, f_tA, f_nB, f_tB, f_nP, f_tP):
    F = ContactForces(f_nA, f_tA, f_nB, f_tB, f_nP, f_tP, 0.0, 0.0)
    res = friction_cone_residuals(F, (0.3, 0.4, 0.8))
    inside = abs(f_tA) <= 0.3 * f_nA and abs(f_tB) <= 0.4 * f_nB and abs(f_tP) <= 0.8 * f_nP
    assert inside == bool(np.all(res[:3] >= 0))
    assert res[3] == f_nA and res[4] == f_nB


def test_complementarity_pairs_order():
    F = ContactForces(1.0, 0.3, 2.0, -0.6, 1.0, 0.8, 0.0, 0.0)
    s = SlipSlacks(pdot_A_plus=0.01, pdot_B_minus=0.02, pdot_y_plus=0.03)
    pairs = slip_complementarity_residuals(F, s, (0.3, 0.3, 0.8))
    assert [p[0] for p in pairs] == list(s.as_array())
    products = [a * b for a, b in pairs]
    assert max(abs(v) for v in products) == pytest.approx(0.0, abs=1e-15)
