"""Nominal contact-implicit pivoting trajectory problem.

Decision vector layout (``N`` steps): ``theta[0..N]``, ``p[0..N]`` and, per
step ``k < N``, the manipulator force ``(f_nP, f_tP)``, environment forces
``(f_nA, f_tA, f_nB, f_tB)`` and the finger slip split ``(s_plus, s_minus)``.
Equilibrium, slipping at A and B, the P-face complementarity and a monotone
pivot with bounded step are imposed at every step; the pose enters through
closed-form kinematics so all rows have exact derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .assembly import Family, build_problem, linear_family
from .mechanics import equilibrium_residual, friction_cone_residuals
from .objects import DomainError, ObjectParams, PoseState, contact_geometry
from .solver import NlpProblem, SolveReport, SolverOptions, solve
from .trajectory import Trajectory

FORCE_NAMES = ("f_nP", "f_tP", "f_nA", "f_tA", "f_nB", "f_tB")
STEP_NAMES = FORCE_NAMES + ("s_plus", "s_minus")

EQ_TOL = 1e-6
BOUND_TOL = 1e-8


class RejectedSolution(RuntimeError):
    """An extracted trajectory breaks one of its invariants."""

    def __init__(self, constraint: str, residual: float, step: Optional[int] = None):
        self.constraint, self.residual, self.step = constraint, float(residual), step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"{constraint} violated{where}: residual {residual:.3e}")


@dataclass(frozen=True)
class OcpSpec:
    """Horizon, boundary states, weights and boxes of the pivoting problem.

    ``p_start`` defaults to a quarter of the object height (capped by the far
    face); ``p_goal`` of None leaves the final finger position free. Box
    entries of None fall back to the object's geometry and force bound.
    """

    N: int = 60
    theta_start: float = 0.0
    p_start: Optional[float] = None
    theta_goal: float = 0.5 * math.pi
    p_goal: Optional[float] = None
    Q: tuple = (0.1, 0.0)
    R: tuple = (0.01, 0.01)
    theta_box: tuple = (0.0, 0.5 * math.pi)
    p_box: Optional[tuple] = None
    f_nP_box: Optional[tuple] = None
    f_tP_box: Optional[tuple] = None
    f_u: Optional[float] = None
    theta_rate_max: Optional[float] = None

    def resolved(self, obj: ObjectParams) -> "OcpSpec":
        """Fill geometry-dependent defaults and validate against ``obj``."""
        face = obj.profile.face_length
        f_u = obj.f_u if self.f_u is None else self.f_u
        spec = replace(
            self,
            p_start=min(0.25 * obj.profile.wall_height, face) if self.p_start is None else self.p_start,
            p_box=(0.0, face) if self.p_box is None else tuple(self.p_box),
            f_u=f_u,
            f_nP_box=(0.0, f_u) if self.f_nP_box is None else tuple(self.f_nP_box),
            f_tP_box=(-obj.mu_P * f_u, obj.mu_P * f_u) if self.f_tP_box is None else tuple(self.f_tP_box),
            theta_rate_max=(0.5 * math.pi) / (0.5 * self.N) if self.theta_rate_max is None else self.theta_rate_max,
            theta_box=tuple(self.theta_box),
            Q=tuple(float(q) for q in self.Q),
            R=tuple(float(r) for r in self.R),
        )
        spec.validate()
        return spec

    def validate(self) -> None:
        if self.N < 2:
            raise DomainError("N must be at least 2")
        if len(self.Q) != 2 or min(self.Q) < 0:
            raise DomainError("Q must be two nonnegative diagonal weights")
        if len(self.R) != 2 or min(self.R) <= 0:
            raise DomainError("R must be two positive diagonal weights")
        lo, hi = self.theta_box
        if not (0.0 <= lo <= hi <= 0.5 * math.pi):
            raise DomainError("theta box must lie in [0, pi/2]")
        for name, v, box in (("theta_start", self.theta_start, self.theta_box),
                             ("theta_goal", self.theta_goal, self.theta_box),
                             ("p_start", self.p_start, self.p_box),
                             ("p_goal", self.p_goal, self.p_box)):
            if v is None:
                continue
            if not (box[0] - 1e-12 <= v <= box[1] + 1e-12):
                raise DomainError(f"{name}={v} outside {box}")
        if self.theta_goal < self.theta_start:
            raise DomainError("theta_goal must not be below theta_start (pivoting is monotone)")
        if self.theta_rate_max <= 0:
            raise DomainError("theta_rate_max must be positive")
        if self.N * self.theta_rate_max < self.theta_goal - self.theta_start - 1e-12:
            raise DomainError("theta_rate_max too small to reach theta_goal in N steps")
        if self.f_u is not None and self.f_u <= 0:
            raise DomainError("f_u must be positive")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "OcpSpec":
        known = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Layout:
    """Index arrays of every variable group in the decision vector."""

    N: int
    groups: dict = field(default_factory=dict)
    n: int = 0

    @classmethod
    def nominal(cls, N: int) -> "Layout":
        lay = cls(N)
        lay.add("theta", N + 1)
        lay.add("p", N + 1)
        for name in STEP_NAMES:
            lay.add(name, N)
        return lay

    def add(self, name: str, size: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.groups[name] = idx
        self.n += size
        return idx

    def __getitem__(self, name) -> np.ndarray:
        return self.groups[name]

    def stage(self, *names) -> np.ndarray:
        """(N, len(names)) indices; state groups contribute their first N entries."""
        return np.column_stack([self.groups[nm][: self.N] for nm in names])

    def unpack(self, x) -> dict:
        x = np.asarray(x, dtype=float)
        return {k: x[v] for k, v in self.groups.items()}


# stage-wise equilibrium on z = (theta, p, f_nP, f_tP, f_nA, f_tA, f_nB, f_tB)
def equilibrium_family(obj: ObjectParams, idx) -> Family:
    prof = obj.profile
    W, L, wA = obj.weight, prof.reach, prof.wall_height
    cx, cy = prof.centroid

    def fun(z):
        th, p, fnP, ftP, fnA, ftA, fnB, ftB = z.T
        c, s = np.cos(th), np.sin(th)
        e1 = fnA + ftB - c * fnP - s * ftP
        e2 = ftA + fnB - W - s * fnP + c * ftP
        e3 = (-wA * s * ftA - wA * c * fnA - W * (cx * c - cy * s) + L * ftP + p * fnP) / L
        return np.column_stack([e1, e2, e3])

    def jac(z):
        th, p, fnP, ftP, fnA, ftA, fnB, ftB = z.T
        c, s = np.cos(th), np.sin(th)
        J = np.zeros((len(z), 3, 8))
        J[:, 0, 0] = s * fnP - c * ftP
        J[:, 0, 2] = -c
        J[:, 0, 3] = -s
        J[:, 0, 4] = 1.0
        J[:, 0, 7] = 1.0
        J[:, 1, 0] = -c * fnP - s * ftP
        J[:, 1, 2] = -s
        J[:, 1, 3] = c
        J[:, 1, 5] = 1.0
        J[:, 1, 6] = 1.0
        J[:, 2, 0] = (-wA * c * ftA + wA * s * fnA + W * (cx * s + cy * c)) / L
        J[:, 2, 1] = fnP / L
        J[:, 2, 2] = p / L
        J[:, 2, 3] = 1.0
        J[:, 2, 4] = -wA * c / L
        J[:, 2, 5] = -wA * s / L
        return J

    def hess(z, lam):
        th, p, fnP, ftP, fnA, ftA, fnB, ftB = z.T
        c, s = np.cos(th), np.sin(th)
        l1, l2, l3 = lam[:, 0], lam[:, 1], lam[:, 2] / L
        H = np.zeros((len(z), 8, 8))
        H[:, 0, 0] = (l1 * (c * fnP + s * ftP) + l2 * (s * fnP - c * ftP)
                      + l3 * (wA * s * ftA + wA * c * fnA + W * (cx * c - cy * s)))
        _sym(H, 0, 2, l1 * s - l2 * c)
        _sym(H, 0, 3, -l1 * c - l2 * s)
        _sym(H, 0, 4, l3 * wA * s)
        _sym(H, 0, 5, -l3 * wA * c)
        _sym(H, 1, 2, l3)
        return H

    return Family("equilibrium", idx, 3, fun, jac, hess)


def _sym(H, i, j, v):
    H[:, i, j] = v
    H[:, j, i] = v


def stage_cost_family(spec: OcpSpec, lay: Layout, p_ref: float) -> Family:
    """Quadratic tracking plus control effort on z = (theta, p, f_nP, f_tP), k < N."""
    q = np.array([spec.Q[0], spec.Q[1], spec.R[0], spec.R[1]])
    ref = np.array([spec.theta_goal, p_ref, 0.0, 0.0])

    def fun(z):
        return np.sum(q * (z - ref) ** 2, axis=1)[:, None]

    def jac(z):
        return (2.0 * q * (z - ref))[:, None, :]

    def hess(z, lam):
        return lam[:, 0, None, None] * np.diag(2.0 * q)[None]

    return Family("stage_cost", lay.stage("theta", "p", "f_nP", "f_tP"), 1, fun, jac, hess)


@dataclass
class Transcription:
    """Families and bookkeeping shared by the nominal and robust builds."""

    obj: ObjectParams
    spec: OcpSpec
    lay: Layout
    lb: np.ndarray
    ub: np.ndarray
    eq: list
    ineq: list
    pairs: list  # (ineq family name, column, ineq family name, column)


def transcribe(obj: ObjectParams, spec: OcpSpec, lay: Optional[Layout] = None) -> Transcription:
    spec = spec.resolved(obj)
    N = spec.N
    lay = lay or Layout.nominal(N)
    mu_A, mu_B, mu_P = obj.mu
    lb, ub = np.full(lay.n, -np.inf), np.full(lay.n, np.inf)

    def box(name, lo, hi):
        lb[lay[name]], ub[lay[name]] = lo, hi

    box("theta", *spec.theta_box)
    box("p", *spec.p_box)
    box("f_nP", *spec.f_nP_box)
    box("f_tP", *spec.f_tP_box)
    box("f_nA", 0.0, spec.f_u)
    box("f_nB", 0.0, spec.f_u)
    box("s_plus", 0.0, np.inf)
    box("s_minus", 0.0, np.inf)
    for name, k, v in (("theta", 0, spec.theta_start), ("p", 0, spec.p_start), ("theta", N, spec.theta_goal)):
        lb[lay[name][k]] = ub[lay[name][k]] = v
    if spec.p_goal is not None:
        lb[lay["p"][N]] = ub[lay["p"][N]] = spec.p_goal

    th, p = lay["theta"], lay["p"]
    nxt = lambda g: np.column_stack([g[:N], g[1:]])  # noqa: E731
    eq = [
        equilibrium_family(obj, lay.stage("theta", "p", *FORCE_NAMES)),
        linear_family("slip_A", lay.stage("f_nA", "f_tA"), [[-mu_A, 1.0]]),
        linear_family("slip_B", lay.stage("f_nB", "f_tB"), [[mu_B, 1.0]]),
        linear_family("finger_motion", np.column_stack([nxt(p), lay.stage("s_plus", "s_minus")]),
                      [[-1.0, 1.0, -1.0, 1.0]]),
    ]
    ineq = [
        linear_family("theta_monotone", nxt(th), [[-1.0, 1.0], [1.0, -1.0]], [0.0, -spec.theta_rate_max]),
        linear_family("cone_P", lay.stage("f_nP", "f_tP"), [[mu_P, -1.0], [mu_P, 1.0]]),
        linear_family("slip_P", lay.stage("s_plus", "s_minus"), np.eye(2)),
    ]
    pairs = [("slip_P", 0, "cone_P", 0), ("slip_P", 1, "cone_P", 1)]
    return Transcription(obj, spec, lay, lb, ub, eq, ineq, pairs)


def family_rows(families: list[Family]) -> dict:
    """Global row index array (K, m) of each family in stacking order."""
    out, off = {}, 0
    for f in families:
        out[f.name] = off + np.arange(f.size).reshape(f.K, f.m)
        off += f.size
    return out


def pair_indices(tr: Transcription) -> np.ndarray:
    rows = family_rows(tr.ineq)
    return np.vstack([np.column_stack([rows[a][:, i], rows[b][:, j]]) for a, i, b, j in tr.pairs])


def build_nominal(obj: ObjectParams, spec: Optional[OcpSpec] = None) -> NlpProblem:
    tr = transcribe(obj, spec or OcpSpec())
    x0 = initial_guess(obj, tr.spec, tr.lay)
    return build_problem(
        tr.lay.n, tr.lb, tr.ub, x0,
        objective=[stage_cost_family(tr.spec, tr.lay, _p_ref(tr.spec))],
        eq=tr.eq, ineq=tr.ineq, comp_pairs=pair_indices(tr),
        meta={"mode": "nominal", "obj": obj, "spec": tr.spec, "layout": tr.lay},
    )


def _p_ref(spec: OcpSpec) -> float:
    return spec.p_start if spec.p_goal is None else spec.p_goal


def _static_lp(obj: ObjectParams, theta: float, p_y: float, f_u: float, f_tP_box) -> np.ndarray:
    """Forces (f_nP, f_tP, f_nA, f_nB) maximizing the smallest normal/cone slack at one pose."""
    geom = contact_geometry(obj, PoseState(theta, p_y))
    c, s = math.cos(theta), math.sin(theta)
    mu_A, mu_B, mu_P = obj.mu
    W, L, wA = obj.weight, obj.profile.reach, obj.profile.wall_height
    # unknowns (f_nP, f_tP, f_nA, f_nB, margin); slipping friction substituted
    A_eq = np.array([
        [-c, -s, 1.0, -mu_B, 0.0],
        [-s, c, mu_A, 1.0, 0.0],
        [p_y, L, -wA * (mu_A * s + c), 0.0, 0.0],
    ])
    b_eq = np.array([0.0, W, W * geom.C[0]])
    A_ub = np.array([
        [0.0, 0.0, -1.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, -1.0, 1.0],
        [-mu_P, 1.0, 0.0, 0.0, 1.0],
        [-mu_P, -1.0, 0.0, 0.0, 1.0],
    ])
    bounds = [(0.0, f_u), tuple(f_tP_box), (0.0, f_u), (0.0, f_u), (None, f_u)]
    res = linprog(np.array([0, 0, 0, 0, -1.0]), A_ub=A_ub, b_ub=np.zeros(4), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return np.array([0.5 * f_u, 0.0, 0.5 * f_u, 0.5 * f_u])
    return res.x[:4]


def initial_guess(obj: ObjectParams, spec: OcpSpec, lay: Layout) -> np.ndarray:
    """Linear pivot, fixed finger, per-step forces from a small max-slack LP."""
    N = spec.N
    x = np.zeros(lay.n)
    theta = np.linspace(spec.theta_start, spec.theta_goal, N + 1)
    p_end = spec.p_start if spec.p_goal is None else spec.p_goal
    p = np.linspace(spec.p_start, p_end, N + 1)
    x[lay["theta"]] = theta
    x[lay["p"]] = p
    for k in range(N):
        f_nP, f_tP, f_nA, f_nB = _static_lp(obj, theta[k], p[k], spec.f_u, spec.f_tP_box)
        for name, v in (("f_nP", f_nP), ("f_tP", f_tP), ("f_nA", f_nA), ("f_tA", obj.mu_A * f_nA),
                        ("f_nB", f_nB), ("f_tB", -obj.mu_B * f_nB)):
            x[lay[name][k]] = v
    dp = np.diff(p)
    x[lay["s_plus"]] = np.maximum(dp, 0.0)
    x[lay["s_minus"]] = np.maximum(-dp, 0.0)
    return x


def slip_displacements(obj: ObjectParams, theta, p) -> dict:
    """Per-step slip split at A (along the wall), B (along the floor) and P (along the face)."""
    wA = obj.profile.wall_height
    d_a = wA * (np.cos(theta[1:]) - np.cos(theta[:-1]))  # A height change
    d_b = wA * (np.sin(theta[1:]) - np.sin(theta[:-1]))  # B distance from wall
    d_p = np.diff(p)
    # a "+" slip rate pairs with friction at +mu f_n, which opposes sliding along -t
    return {
        "pdot_A_plus": np.maximum(-d_a, 0.0), "pdot_A_minus": np.maximum(d_a, 0.0),
        "pdot_B_plus": np.maximum(-d_b, 0.0), "pdot_B_minus": np.maximum(d_b, 0.0),
        "pdot_y_plus": np.maximum(d_p, 0.0), "pdot_y_minus": np.maximum(-d_p, 0.0),
    }


def extract_trajectory(prob: NlpProblem, x, report: Optional[SolveReport] = None,
                       check: bool = True) -> Trajectory:
    """Unpack a solution vector and validate it; raises :class:`RejectedSolution`."""
    obj, spec, lay = prob.meta["obj"], prob.meta["spec"], prob.meta["layout"]
    v = lay.unpack(x)
    p_y = np.clip(v["p"], *spec.p_box)
    theta = np.clip(v["theta"], *spec.theta_box)
    slip = slip_displacements(obj, theta, p_y)
    slip["pdot_y_plus"], slip["pdot_y_minus"] = v["s_plus"], v["s_minus"]
    meta = {"mode": prob.meta.get("mode", "nominal"), "object": obj.to_dict(), "spec": spec.to_dict(),
            "objective": float(prob.objective(np.asarray(x, float)))}
    if report is not None:
        meta["solver"] = report.summary()
    traj = Trajectory(theta, p_y, *(v[n] for n in FORCE_NAMES), slip=slip, metadata=meta)
    if check:
        delta = report.delta if report is not None else None
        validate_trajectory(traj, obj, spec, delta)
    return traj


def validate_trajectory(traj: Trajectory, obj: ObjectParams, spec: OcpSpec, delta: Optional[float] = None) -> None:
    """Raise :class:`RejectedSolution` naming the first broken invariant."""
    N = traj.N
    for name, got, want in (("theta_start", traj.theta[0], spec.theta_start),
                            ("theta_goal", traj.theta[N], spec.theta_goal),
                            ("p_start", traj.p_y[0], spec.p_start)):
        if abs(got - want) > 1e-9:
            raise RejectedSolution(name, abs(got - want))
    steps = np.diff(traj.theta)
    if steps.min() < -1e-9:
        raise RejectedSolution("theta_monotone", -steps.min(), int(np.argmin(steps)))
    for name in ("f_nA", "f_nB", "f_nP"):
        vals = getattr(traj, name)
        k = int(np.argmin(vals))
        if vals[k] < -BOUND_TOL:
            raise RejectedSolution(f"{name} >= 0", -vals[k], k)
        k = int(np.argmax(vals))
        if vals[k] > spec.f_u + BOUND_TOL:
            raise RejectedSolution(f"{name} <= f_u", vals[k] - spec.f_u, k)
    for k in range(N):
        geom = traj.geometry(obj, k)
        F = traj.forces(geom, k)
        res = equilibrium_residual(geom, F, obj.m, 0.0, obj.g_mag)
        res[2] /= obj.profile.reach
        if np.max(np.abs(res)) > EQ_TOL:
            raise RejectedSolution("equilibrium", np.max(np.abs(res)), k)
        cone = friction_cone_residuals(F, obj.mu)[:3]
        if cone.min() < -EQ_TOL:
            raise RejectedSolution("friction_cone", -cone.min(), k)
        s = traj.slacks(k)
        prod = max(s.pdot_y_plus * (obj.mu_P * F.f_nP - F.f_tP), s.pdot_y_minus * (obj.mu_P * F.f_nP + F.f_tP))
        limit = (delta if delta is not None else 1e-6) * (1 + 1e-6) + 1e-12
        if prod > limit:
            raise RejectedSolution("complementarity", prod, k)


def solve_nominal(obj: ObjectParams, spec: Optional[OcpSpec] = None,
                  opts: Optional[SolverOptions] = None) -> tuple[Trajectory, SolveReport]:
    prob = build_nominal(obj, spec)
    rep = solve(prob, opts)
    if not rep.converged:
        raise RuntimeError(f"nominal solve did not converge: {rep.status} (stage {rep.failed_stage})")
    return extract_trajectory(prob, rep.x, rep), rep
