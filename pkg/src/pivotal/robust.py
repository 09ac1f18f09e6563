"""Robust pivoting: maximize the worst per-step stability margin.

Each step's margin is the optimum of a scalar LP whose rows depend on the
pose and the contact normal forces. The LP is replaced by its KKT system
(primal rows, multipliers, complementary slackness and stationarity), which
turns the max-min problem into one smooth NLP with complementarity pairs.
Rows per direction: contact A, contact B, ``xi >= 0`` and ``xi <= cap``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import Family, build_problem, linear_family
from .margin import KINDS, MarginBounds, default_cap, lp_margin, margin_bounds, margin_profile
from .objects import ObjectParams, PoseState, contact_geometry
from .ocp import Layout, OcpSpec, initial_guess, pair_indices, transcribe
from .solver import NlpProblem

N_ROWS = 4
W_NAMES = tuple(f"w_plus_{j}" for j in range(N_ROWS)) + tuple(f"w_minus_{j}" for j in range(N_ROWS))


def mode_name(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown margin kind {kind!r}")
    return f"robust-{kind}"


def row_coefficients(obj: ObjectParams, kind: str, theta) -> tuple[np.ndarray, ...]:
    """Contact-A and contact-B row slopes and their first two theta derivatives.

    Returns ``(a_A, a_A', a_A'', a_B, a_B', a_B'')``; the rows read
    ``a * xi <= f_n`` for the "+" direction.
    """
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = obj.profile.centroid
    wA, mu = obj.profile.wall_height, obj.mu_A
    D = -wA * (mu * s + c)
    D1 = -wA * (mu * c - s)
    if kind == "mass":
        C = cx * c - cy * s
        C1 = -cx * s - cy * c
        a = C / D
        a1 = (C1 * D - C * D1) / D**2
        a2 = -2.0 * C1 * D1 / D**2 + 2.0 * C * D1**2 / D**3
        return a, a1, a2, 1.0 - mu * a, -mu * a1, -mu * a2
    if kind == "com":
        W = obj.weight
        a = -W / D
        a1 = W * D1 / D**2
        a2 = -W * (1.0 / D + 2.0 * D1**2 / D**3)
        return a, a1, a2, -mu * a, -mu * a1, -mu * a2
    raise ValueError(f"unknown margin kind {kind!r}")


@dataclass(frozen=True)
class KktBlock:
    """KKT data of one step's pair of margin LPs.

    ``C`` and ``E`` are the row coefficients for the "+" and "-" directions,
    ``d`` the shared right-hand sides, ordered contact-A, contact-B, xi >= 0, cap.
    """

    C: np.ndarray
    d: np.ndarray
    E: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    eps_plus: float
    eps_minus: float

    @classmethod
    def from_bounds(cls, bounds: MarginBounds, cap: float, eps_plus, eps_minus, w_plus, w_minus) -> "KktBlock":
        a, d = np.zeros(N_ROWS), np.array([np.inf, np.inf, 0.0, cap])
        for j, src in enumerate(("contact-A", "contact-B")):
            r = bounds.row(src)
            if r is not None:
                a[j], d[j] = r.a, r.b
        C = np.array([a[0], a[1], -1.0, 1.0])
        E = np.array([-a[0], -a[1], -1.0, 1.0])
        return cls(C, d, E, np.asarray(w_plus, float), np.asarray(w_minus, float), float(eps_plus), float(eps_minus))


def kkt_residuals(block: KktBlock) -> dict:
    """Primal feasibility, dual sign, complementary slackness and stationarity per direction."""
    out = {}
    for tag, coef, w, eps in (("plus", block.C, block.w_plus, block.eps_plus),
                              ("minus", block.E, block.w_minus, block.eps_minus)):
        slack = block.d - coef * eps
        finite = np.isfinite(slack)
        comp = np.where(finite, w * np.where(finite, slack, 0.0), np.where(w != 0, np.inf, 0.0))
        out[f"primal_{tag}"] = float(max(0.0, -np.min(slack)))
        out[f"dual_{tag}"] = float(max(0.0, -np.min(w)))
        out[f"comp_{tag}"] = float(np.max(np.abs(comp)))
        out[f"stationarity_{tag}"] = float(abs(-1.0 + np.dot(coef, w)))
    return out


def max_kkt_residual(block: KktBlock) -> float:
    return max(kkt_residuals(block).values())


def _lp_rows_family(obj, kind, idx) -> Family:
    """Slacks of the two contact rows in both directions on z = (theta, f_nA, f_nB, xi+, xi-)."""

    def fun(z):
        th, fnA, fnB, xp, xm = z.T
        aA, _, _, aB, _, _ = row_coefficients(obj, kind, th)
        return np.column_stack([fnA - aA * xp, fnB - aB * xp, fnA + aA * xm, fnB + aB * xm])

    def jac(z):
        th, fnA, fnB, xp, xm = z.T
        aA, dA, _, aB, dB, _ = row_coefficients(obj, kind, th)
        J = np.zeros((len(z), 4, 5))
        J[:, 0, 0], J[:, 0, 1], J[:, 0, 3] = -dA * xp, 1.0, -aA
        J[:, 1, 0], J[:, 1, 2], J[:, 1, 3] = -dB * xp, 1.0, -aB
        J[:, 2, 0], J[:, 2, 1], J[:, 2, 4] = dA * xm, 1.0, aA
        J[:, 3, 0], J[:, 3, 2], J[:, 3, 4] = dB * xm, 1.0, aB
        return J

    def hess(z, lam):
        th, fnA, fnB, xp, xm = z.T
        _, dA, ddA, _, dB, ddB = row_coefficients(obj, kind, th)
        l0, l1, l2, l3 = lam.T
        H = np.zeros((len(z), 5, 5))
        H[:, 0, 0] = -(l0 * ddA + l1 * ddB) * xp + (l2 * ddA + l3 * ddB) * xm
        H[:, 0, 3] = H[:, 3, 0] = -(l0 * dA + l1 * dB)
        H[:, 0, 4] = H[:, 4, 0] = l2 * dA + l3 * dB
        return H

    return Family("lp_rows", idx, 4, fun, jac, hess)


def _stationarity_family(obj, kind, idx) -> Family:
    """LP stationarity ``-1 + sum_j c_j w_j = 0`` for both directions on z = (theta, w+[4], w-[4])."""

    def fun(z):
        th, wp, wm = z[:, 0], z[:, 1:5], z[:, 5:9]
        aA, _, _, aB, _, _ = row_coefficients(obj, kind, th)
        sp = -1.0 + aA * wp[:, 0] + aB * wp[:, 1] - wp[:, 2] + wp[:, 3]
        sm = -1.0 - aA * wm[:, 0] - aB * wm[:, 1] - wm[:, 2] + wm[:, 3]
        return np.column_stack([sp, sm])

    def jac(z):
        th, wp, wm = z[:, 0], z[:, 1:5], z[:, 5:9]
        aA, dA, _, aB, dB, _ = row_coefficients(obj, kind, th)
        J = np.zeros((len(z), 2, 9))
        J[:, 0, 0] = dA * wp[:, 0] + dB * wp[:, 1]
        J[:, 0, 1], J[:, 0, 2], J[:, 0, 3], J[:, 0, 4] = aA, aB, -1.0, 1.0
        J[:, 1, 0] = -(dA * wm[:, 0] + dB * wm[:, 1])
        J[:, 1, 5], J[:, 1, 6], J[:, 1, 7], J[:, 1, 8] = -aA, -aB, -1.0, 1.0
        return J

    def hess(z, lam):
        th, wp, wm = z[:, 0], z[:, 1:5], z[:, 5:9]
        _, dA, ddA, _, dB, ddB = row_coefficients(obj, kind, th)
        lp, lm = lam[:, 0], lam[:, 1]
        H = np.zeros((len(z), 9, 9))
        H[:, 0, 0] = lp * (ddA * wp[:, 0] + ddB * wp[:, 1]) - lm * (ddA * wm[:, 0] + ddB * wm[:, 1])
        for col, v in ((1, lp * dA), (2, lp * dB), (5, -lm * dA), (6, -lm * dB)):
            H[:, 0, col] = H[:, col, 0] = v
        return H

    return Family("lp_stationarity", idx, 2, fun, jac, hess)


def _objective_family(idx, alpha, scale) -> Family:
    coef = -np.array([1.0, alpha]) / scale

    def fun(z):
        return (z @ coef)[:, None]

    def jac(z):
        return np.broadcast_to(coef, (len(z), 1, 2))

    return Family("margin_objective", idx, 1, fun, jac)


def _effort_family(idx, weight) -> Family:
    def fun(z):
        return weight * np.sum(z**2, axis=1)[:, None]

    def jac(z):
        return (2.0 * weight * z)[:, None, :]

    def hess(z, lam):
        return lam[:, 0, None, None] * (2.0 * weight * np.eye(2))[None]

    return Family("effort", idx, 1, fun, jac, hess)


def robust_layout(N: int) -> Layout:
    lay = Layout.nominal(N)
    lay.add("xi_plus", N)
    lay.add("xi_minus", N)
    for name in W_NAMES:
        lay.add(name, N)
    lay.add("t_plus", 1)
    lay.add("t_minus", 1)
    return lay


def build_robust(obj: ObjectParams, spec: Optional[OcpSpec] = None, kind: str = "mass", alpha: float = 0.001,
                 cap: Optional[float] = None, effort_weight: float = 0.0, x_warm=None) -> NlpProblem:
    """Single-level robust problem; ``x_warm`` is a nominal solution vector used as the start."""
    mode = mode_name(kind)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    cap = default_cap(obj, kind) if cap is None else float(cap)
    spec = (spec or OcpSpec()).resolved(obj)
    N = spec.N
    lay = robust_layout(N)
    tr = transcribe(obj, spec, lay)
    lb, ub = tr.lb, tr.ub
    for name in ("xi_plus", "xi_minus"):
        lb[lay[name]], ub[lay[name]] = 0.0, cap
    for name in W_NAMES:
        lb[lay[name]] = 0.0
    for name in ("t_plus", "t_minus"):
        lb[lay[name]], ub[lay[name]] = 0.0, cap

    t_idx = np.broadcast_to(np.concatenate([lay["t_plus"], lay["t_minus"]]), (N, 2))
    eq = tr.eq + [_stationarity_family(obj, kind, lay.stage("theta", *W_NAMES))]
    ineq = tr.ineq + [
        _lp_rows_family(obj, kind, lay.stage("theta", "f_nA", "f_nB", "xi_plus", "xi_minus")),
        linear_family("xi_rows", lay.stage("xi_plus", "xi_minus"),
                      [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], [0.0, -cap, 0.0, -cap]),
        linear_family("w_rows", lay.stage(*W_NAMES), np.eye(2 * N_ROWS)),
        linear_family("epigraph", np.column_stack([lay.stage("xi_plus", "xi_minus"), t_idx]),
                      [[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]]),
    ]
    # multiplier j of each direction pairs with the slack of row j
    row_slots = [("lp_rows", 0), ("lp_rows", 1), ("xi_rows", 0), ("xi_rows", 1),
                 ("lp_rows", 2), ("lp_rows", 3), ("xi_rows", 2), ("xi_rows", 3)]
    tr.ineq = ineq
    tr.pairs = tr.pairs + [("w_rows", j, fam, col) for j, (fam, col) in enumerate(row_slots)]

    scale = cap / 100.0
    objective = [_objective_family(np.concatenate([lay["t_plus"], lay["t_minus"]])[None, :], alpha, scale)]
    if effort_weight > 0:
        objective.append(_effort_family(lay.stage("f_nP", "f_tP"), effort_weight))

    x0 = robust_initial_guess(obj, spec, lay, kind, cap, x_warm)
    return build_problem(
        lay.n, lb, ub, x0, objective=objective, eq=eq, ineq=ineq, comp_pairs=pair_indices(tr),
        meta={"mode": mode, "obj": obj, "spec": spec, "layout": lay, "kind": kind, "alpha": alpha,
              "cap": cap, "effort_weight": effort_weight},
    )


def robust_initial_guess(obj, spec: OcpSpec, lay: Layout, kind: str, cap: float, x_warm=None) -> np.ndarray:
    """Nominal variables from ``x_warm`` (or the nominal heuristic), LP optima and multipliers per step."""
    nom = Layout.nominal(spec.N)
    src = initial_guess(obj, spec, nom) if x_warm is None else np.asarray(x_warm, dtype=float)
    if len(src) not in (nom.n, lay.n):
        raise ValueError(f"warm start has length {len(src)}, expected {nom.n}")
    x = np.zeros(lay.n)
    x[: nom.n] = src[: nom.n]
    v = nom.unpack(src[: nom.n])
    for k in range(spec.N):
        geom = contact_geometry(obj, PoseState(float(v["theta"][k]), float(np.clip(v["p"][k], *spec.p_box))))
        mb = margin_bounds(geom, (v["f_nP"][k], v["f_tP"][k]), obj, kind)
        for tag, direction in (("plus", "+"), ("minus", "-")):
            res = lp_margin(mb, direction, cap)
            x[lay[f"xi_{tag}"][k]] = res.xi
            for j in range(N_ROWS):
                x[lay[f"w_{tag}_{j}"][k]] = res.multipliers[j]
    x[lay["t_plus"]] = np.min(x[lay["xi_plus"]])
    x[lay["t_minus"]] = np.min(x[lay["xi_minus"]])
    return x


def embedded_margins(prob: NlpProblem, x) -> dict:
    lay = prob.meta["layout"]
    v = lay.unpack(x)
    return {
        "xi_plus": v["xi_plus"], "xi_minus": v["xi_minus"],
        "t_plus": float(v["t_plus"][0]), "t_minus": float(v["t_minus"][0]),
        "w_plus": np.column_stack([v[f"w_plus_{j}"] for j in range(N_ROWS)]),
        "w_minus": np.column_stack([v[f"w_minus_{j}"] for j in range(N_ROWS)]),
    }


def kkt_blocks(prob: NlpProblem, x, traj) -> list[KktBlock]:
    """Blocks pairing embedded optima and multipliers with rows recomputed from the trajectory."""
    obj, kind, cap = prob.meta["obj"], prob.meta["kind"], prob.meta["cap"]
    em = embedded_margins(prob, x)
    out = []
    for k in range(traj.N):
        mb = margin_bounds(traj.geometry(obj, k), traj.controls[k], obj, kind)
        out.append(KktBlock.from_bounds(mb, cap, em["xi_plus"][k], em["xi_minus"][k],
                                        em["w_plus"][k], em["w_minus"][k]))
    return out


def evaluate_worstcase(traj, obj: ObjectParams, kind: str, alpha: float = 0.001,
                       cap: Optional[float] = None) -> tuple[float, float, float]:
    """Worst per-step margins of a trajectory and the weighted robust objective."""
    prof = margin_profile(traj, obj, kind, cap)
    wp, wm = prof.worst_plus, prof.worst_minus
    return wp, wm, wp + alpha * wm if not math.isnan(wp) else math.nan
