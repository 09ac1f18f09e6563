import math

import numpy as np
import pytest
from helpers import feasible_samples

from pivotal.margin import KINDS, default_cap, lp_margin, margin_bounds, margin_profile
from pivotal.objects import BUNDLED, PoseState, contact_geometry, load_object
from pivotal.ocp import OcpSpec
from pivotal.plan import plan
from pivotal.robust import (
    KktBlock, build_robust, embedded_margins, evaluate_worstcase, kkt_blocks, kkt_residuals,
    max_kkt_residual, mode_name, row_coefficients,
)
from pivotal.solver import check_derivatives, check_hessian
from pivotal.trajectory import Trajectory


def _block(a_A, b_A, a_B, b_B, cap, eps_plus, eps_minus, w_plus, w_minus):
    d = np.array([b_A, b_B, 0.0, cap])
    C = np.array([a_A, a_B, -1.0, 1.0])
    return KktBlock(C, d, np.array([-a_A, -a_B, -1.0, 1.0]), np.asarray(w_plus, float),
                    np.asarray(w_minus, float), eps_plus, eps_minus)


def test_single_binding_row_kkt():
    a = 2.5
    blk = _block(a, 1.0, -1.0, 3.0, 10.0, 0.4, 3.0, [1 / a, 0, 0, 0], [0, 1.0, 0, 0])
    res = kkt_residuals(blk)
    assert res["stationarity_plus"] == 0.0
    assert res["stationarity_minus"] == 0.0
    assert max(res.values()) < 1e-15


def test_perturbed_multipliers_detected():
    a = 2.5
    blk = _block(a, 1.0, -1.0, 3.0, 10.0, 0.4, 3.0, [1 / a + 0.01, 0, 0, 0], [0, 1.0, 0, 0])
    assert kkt_residuals(blk)["stationarity_plus"] == pytest.approx(0.025)
    blk = _block(a, 1.0, -1.0, 3.0, 10.0, 0.4, 3.0, [1 / a, 0, -0.1, 0], [0, 1.0, 0, 0])
    assert kkt_residuals(blk)["dual_plus"] == pytest.approx(0.1)


def test_wrong_optimum_breaks_slackness():
    # optimum is 1/2.5 = 0.4; at 0.3 row A keeps slack 0.25 while its multiplier is 0.4
    a = 2.5
    blk = _block(a, 1.0, -1.0, 3.0, 10.0, 0.3, 3.0, [1 / a, 0, 0, 0], [0, 1.0, 0, 0])
    assert kkt_residuals(blk)["comp_plus"] == pytest.approx(0.1)


@pytest.mark.parametrize("name", BUNDLED)
def test_lp_margin_output_satisfies_kkt(name):
    obj = load_object(name)
    rng = np.random.default_rng(10 + BUNDLED.index(name))
    for kind in KINDS:
        cap = default_cap(obj, kind)
        for geom, u in feasible_samples(obj, 200, rng):
            mb = margin_bounds(geom, u, obj, kind)
            p, m = lp_margin(mb, "+", cap), lp_margin(mb, "-", cap)
            blk = KktBlock.from_bounds(mb, cap, p.xi, m.xi, p.multipliers, m.multipliers)
            assert max_kkt_residual(blk) < 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_row_coefficients_match_bounds_and_derivatives(gear1, peg1, kind):
    for obj in (gear1, peg1):
        th = np.linspace(0.01, math.pi / 2 - 0.01, 40)
        aA, dA, ddA, aB, dB, ddB = row_coefficients(obj, kind, th)
        for k, t in enumerate(th):
            mb = margin_bounds(contact_geometry(obj, PoseState(t, 0.004)), (1.0, 0.2), obj, kind)
            if mb.row("contact-A") is not None:
                assert mb.row("contact-A").a == pytest.approx(aA[k], rel=1e-12, abs=1e-14)
            assert mb.row("contact-B").a == pytest.approx(aB[k], rel=1e-12, abs=1e-14)
        h = 1e-5
        plus, minus = row_coefficients(obj, kind, th + h), row_coefficients(obj, kind, th - h)
        for j, d in ((0, dA), (3, dB), (1, ddA), (4, ddB)):
            fd = (plus[j] - minus[j]) / (2 * h)
            assert np.max(np.abs(fd - d) / np.maximum(1, np.abs(fd))) < 1e-6


def test_mode_and_alpha_validation(gear1):
    assert mode_name("mass") == "robust-mass"
    with pytest.raises(ValueError):
        mode_name("friction")
    with pytest.raises(ValueError):
        build_robust(gear1, OcpSpec(N=5), "mass", alpha=-1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_warm_start_is_kkt_point(gear1, gear1_nominal, kind):
    prob = build_robust(gear1, OcpSpec(N=60), kind, 0.001, x_warm=gear1_nominal.report.x)
    blocks = kkt_blocks(prob, prob.x0, gear1_nominal.trajectory)
    assert max(max_kkt_residual(b) for b in blocks) < 1e-9
    em = embedded_margins(prob, prob.x0)
    prof = margin_profile(gear1_nominal.trajectory, gear1, kind)
    assert em["xi_plus"] == pytest.approx(prof.xi_plus, abs=1e-12)
    assert em["t_plus"] == pytest.approx(prof.worst_plus, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_robust_derivatives_small_instance(peg1, kind):
    prob = build_robust(peg1, OcpSpec(N=6), kind, 0.001, effort_weight=0.01)
    x = prob.x0
    assert check_derivatives(prob, x) < 1e-5
    rng = np.random.default_rng(2)
    assert check_hessian(prob, x, rng.normal(size=prob.m_eq), rng.normal(size=prob.m_in)) < 1e-5


def _bilevel_gap(res, obj):
    prob, x = res.problem, res.report.x
    em = embedded_margins(prob, x)
    prof = margin_profile(res.trajectory, obj, prob.meta["kind"], prob.meta["cap"])
    gap = max(np.max(np.abs(em["xi_plus"] - prof.xi_plus)), np.max(np.abs(em["xi_minus"] - prof.xi_minus)))
    tight = max(abs(em["t_plus"] - em["xi_plus"].min()), abs(em["t_minus"] - em["xi_minus"].min()))
    return gap, tight


@pytest.mark.slow
def test_gear1_robust_mass_consistency(gear1, gear1_robust_mass, gear1_nominal):
    res = gear1_robust_mass
    assert res.report.converged
    assert res.trajectory.mode == "robust-mass"
    gap, tight = _bilevel_gap(res, gear1)
    assert gap < 1e-6 and tight < 1e-6
    blocks = kkt_blocks(res.problem, res.report.x, res.trajectory)
    assert max(max_kkt_residual(b) for b in blocks) < 1e-6
    rob = evaluate_worstcase(res.trajectory, gear1, "mass", 0.001)
    nom = evaluate_worstcase(gear1_nominal.trajectory, gear1, "mass", 0.001)
    assert rob[2] > nom[2]
    meta = res.trajectory.metadata["robust"]
    assert meta["t_plus"] == pytest.approx(rob[0], abs=1e-6)
    assert meta["max_kkt_residual"] < 1e-6


def test_peg1_robust_mass_consistency(peg1, peg1_robust_mass):
    gap, tight = _bilevel_gap(peg1_robust_mass, peg1)
    assert gap < 1e-6 and tight < 1e-6


def test_zero_alpha_weakly_raises_plus_margin(peg1, peg1_robust_mass):
    res0 = plan(peg1, OcpSpec(N=15), "robust-mass", alpha=0.0)
    t0 = res0.trajectory.metadata["robust"]["t_plus"]
    t1 = peg1_robust_mass.trajectory.metadata["robust"]["t_plus"]
    assert t0 >= t1 - 1e-6


def test_constant_profile_objective(gear1):
    # a tiny cap binds in both directions at every step, so the margin is the cap itself
    N, cap, alpha = 6, 1e-3, 0.001
    theta, p, u = 0.6, 0.006, (2.0, 1.0)
    mb = margin_bounds(contact_geometry(gear1, PoseState(theta, p)), u, gear1, "mass")
    assert min(lp_margin(mb, d, 1.0).xi for d in "+-") > cap
    z = np.zeros(N)
    traj = Trajectory(np.full(N + 1, theta), np.full(N + 1, p), np.full(N, u[0]), np.full(N, u[1]), z, z, z, z)
    wp, wm, obj_val = evaluate_worstcase(traj, gear1, "mass", alpha, cap)
    assert wp == wm == cap
    assert obj_val == pytest.approx((1 + alpha) * cap, rel=1e-15)
