"""Smooth NLP backend with a relaxation homotopy for complementarity pairs.

A problem supplies callbacks with hand-coded sparse derivatives. Every
complementarity pair ``(i, j)`` names two rows of the inequality vector
``h(x) >= 0``; each homotopy stage adds ``h_i(x) * h_j(x) <= delta`` and hands
the smooth problem to IPOPT (through CasADi callbacks), warm-started from the
previous stage.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import casadi as ca
import numpy as np

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
PAIR_TARGET = 0.9


@dataclass
class SparseFn:
    """Fixed COO pattern plus a callable returning values in that order."""

    rows: np.ndarray
    cols: np.ndarray
    values: Callable[..., np.ndarray]
    shape: tuple[int, int]

    def matrix(self, *args):
        from scipy.sparse import coo_matrix

        return coo_matrix((self.values(*args), (self.rows, self.cols)), shape=self.shape).tocsr()


@dataclass
class NlpProblem:
    """min f(x) s.t. c(x) = 0, h(x) >= 0, lb <= x <= ub, h_i(x) h_j(x) = 0 for pairs.

    ``hessian`` returns the upper-triangular Hessian of
    ``obj_factor*f + lam_eq.c + lam_in.h`` on ``hess_rows/hess_cols``.
    """

    n: int
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    eq: Callable[[np.ndarray], np.ndarray]
    eq_jac: SparseFn
    ineq: Callable[[np.ndarray], np.ndarray]
    ineq_jac: SparseFn
    hess_rows: np.ndarray
    hess_cols: np.ndarray
    hessian: Callable[[np.ndarray, float, np.ndarray, np.ndarray], np.ndarray]
    comp_pairs: np.ndarray
    m_eq: int
    m_in: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.comp_pairs = np.asarray(self.comp_pairs, dtype=int).reshape(-1, 2)
        if self.comp_pairs.size and (self.comp_pairs.min() < 0 or self.comp_pairs.max() >= self.m_in):
            raise ValueError("complementarity pair references a missing inequality row")
        for name, v in (("lb", self.lb), ("ub", self.ub), ("x0", self.x0)):
            if np.shape(v) != (self.n,):
                raise ValueError(f"{name} has shape {np.shape(v)}, expected ({self.n},)")

    def comp_products(self, x) -> np.ndarray:
        h = self.ineq(x)
        return h[self.comp_pairs[:, 0]] * h[self.comp_pairs[:, 1]]


@dataclass
class SolverOptions:
    schedule: tuple = DEFAULT_SCHEDULE
    tol_stationarity: float = 1e-6
    tol_feasibility: float = 1e-8
    tol_complementarity: float = 1e-6
    max_iter: int = 3000
    retries: int = 2
    verbose: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SolverOptions":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "schedule" in known:
            known["schedule"] = tuple(float(s) for s in known["schedule"])
        return cls(**known)


@dataclass(frozen=True)
class SolveReport:
    status: str  # converged | max-iter | infeasible | singular | failed
    x: np.ndarray
    objective: float
    delta: float
    stage_iterations: tuple
    eq_residual: float
    ineq_violation: float
    comp_residual: float
    stationarity: float
    failed_stage: Optional[int] = None
    wall_time: float = 0.0
    lam_g: Optional[np.ndarray] = None
    lam_x: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "delta": self.delta,
            "iterations": list(self.stage_iterations),
            "eq_residual": self.eq_residual,
            "ineq_violation": self.ineq_violation,
            "comp_residual": self.comp_residual,
            "stationarity": self.stationarity,
            "wall_time_s": round(self.wall_time, 3),
        }


class _Pattern:
    """Canonical (CSC-ordered, duplicate-free) pattern for a COO structure."""

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        key = cols * shape[0] + rows
        uniq, self.map = np.unique(key, return_inverse=True)
        self.nnz = len(uniq)
        r, c = uniq % shape[0], uniq // shape[0]
        colind = np.searchsorted(c, np.arange(shape[1] + 1)).astype(np.int64)
        self.sparsity = ca.Sparsity(shape[0], shape[1], colind.tolist(), r.astype(np.int64).tolist())

    def collect(self, vals) -> np.ndarray:
        return np.bincount(self.map, weights=vals, minlength=self.nnz)


class _Callback(ca.Callback):
    def __init__(self, name, in_sps, out_sps, fun, in_names=None, out_names=None, jac=None):
        ca.Callback.__init__(self)
        self._in, self._out, self._fun = in_sps, out_sps, fun
        self._in_names, self._out_names = in_names, out_names
        self._jac = jac
        self._keep = []
        self.construct(name, {})

    def get_n_in(self):
        return len(self._in)

    def get_n_out(self):
        return len(self._out)

    def get_sparsity_in(self, i):
        return self._in[i]

    def get_sparsity_out(self, i):
        return self._out[i]

    def get_name_in(self, i):
        return self._in_names[i] if self._in_names else f"i{i}"

    def get_name_out(self, i):
        return self._out_names[i] if self._out_names else f"o{i}"

    def eval(self, args):
        return self._fun(*[np.asarray(a).ravel() for a in args])

    def has_jacobian(self):
        return self._jac is not None

    def has_jac_sparsity(self, oind, iind):
        return self._jac is not None and oind == 0 and iind == 0

    def get_jac_sparsity(self, oind, iind, symmetric):
        return self._jac[0]

    def get_jacobian(self, name, inames, onames, opts):
        sp, fn = self._jac
        cb = _Callback(name, list(self._in) + list(self._out), [sp], lambda x, *_: [ca.DM(sp, fn(x))])
        self._keep.append(cb)
        return cb


class _SmoothNlp:
    """The relaxed problem for a given pair list, wired into an IPOPT instance."""

    def __init__(self, prob: NlpProblem, opts: SolverOptions):
        self.prob = prob
        n, m_eq, m_in = prob.n, prob.m_eq, prob.m_in
        pairs = prob.comp_pairs
        self.n_pairs = len(pairs)
        self.m = m_eq + m_in + self.n_pairs

        # fixed COO structures
        er, ec = prob.eq_jac.rows, prob.eq_jac.cols
        ir, ic = prob.ineq_jac.rows, prob.ineq_jac.cols
        self._sel_i, self._pair_i = self._match(ir, pairs[:, 0])
        self._sel_j, self._pair_j = self._match(ir, pairs[:, 1])
        jr = np.concatenate([er, m_eq + ir, m_eq + m_in + self._pair_i, m_eq + m_in + self._pair_j])
        jc = np.concatenate([ec, ic, ic[self._sel_i], ic[self._sel_j]])
        self.jac_pat = _Pattern(jr, jc, (self.m, n))

        # outer-product Hessian terms of the pair products
        oi, oj, op = [], [], []
        for p in range(self.n_pairs):
            ei = self._sel_i[self._pair_i == p]
            ej = self._sel_j[self._pair_j == p]
            for a in ei:
                for b in ej:
                    oi.append(a)
                    oj.append(b)
                    op.append(p)
        self._oi, self._oj, self._op = (np.array(v, dtype=np.int64) for v in (oi, oj, op))
        ca_, cb_ = ic[self._oi], ic[self._oj]
        self._odiag = np.where(ca_ == cb_, 2.0, 1.0)
        hr = np.concatenate([prob.hess_rows, np.minimum(ca_, cb_)])
        hc = np.concatenate([prob.hess_cols, np.maximum(ca_, cb_)])
        self.hess_pat = _Pattern(hr, hc, (n, n))

        D = ca.Sparsity.dense
        f_cb = _Callback("f", [D(n, 1)], [D(1, 1)], lambda x: [prob.objective(x)],
                         jac=(D(1, n), lambda x: prob.gradient(x)))
        g_cb = _Callback("g", [D(n, 1)], [D(self.m, 1)], lambda x: [self.g(x)],
                         jac=(self.jac_pat.sparsity, self.jac_values))
        h_cb = _Callback("hess_lag", [D(n, 1), D(0, 1), D(1, 1), D(self.m, 1)], [self.hess_pat.sparsity],
                         lambda x, p, lf, lg: [ca.DM(self.hess_pat.sparsity, self.hess_values(x, float(lf[0]), lg))],
                         in_names=["x", "p", "lam_f", "lam_g"], out_names=["hess_gamma_x_x"])
        self._cbs = (f_cb, g_cb, h_cb)
        x = ca.MX.sym("x", n)
        ipopt = {
            "tol": 1e-8,
            "constr_viol_tol": opts.tol_feasibility,
            "acceptable_tol": 1e-6,
            "acceptable_constr_viol_tol": opts.tol_feasibility,
            "max_iter": opts.max_iter,
            "print_level": 5 if opts.verbose > 1 else 0,
            "sb": "yes",
            "bound_relax_factor": 1e-10,
        }
        self.nlp_opts = {"hess_lag": h_cb, "print_time": False, "error_on_fail": False, "ipopt": ipopt}
        self._x = x
        self._solvers = {}

    @staticmethod
    def _match(rows, targets):
        """COO entries whose row equals targets[p], paired with p."""
        order = np.argsort(targets, kind="stable")
        sorted_t = targets[order]
        sel, pair = [], []
        lo = np.searchsorted(sorted_t, rows, side="left")
        hi = np.searchsorted(sorted_t, rows, side="right")
        for e in range(len(rows)):
            for q in range(lo[e], hi[e]):
                sel.append(e)
                pair.append(order[q])
        return np.array(sel, dtype=np.int64), np.array(pair, dtype=np.int64)

    def solver(self, variant: str):
        if variant not in self._solvers:
            opts = dict(self.nlp_opts)
            ip = dict(opts["ipopt"])
            if variant == "warm":
                ip.update(warm_start_init_point="yes", warm_start_bound_push=1e-9,
                          warm_start_mult_bound_push=1e-9, mu_init=1e-5)
            elif variant == "adaptive":
                ip.update(mu_strategy="adaptive")
            opts["ipopt"] = ip
            f_cb, g_cb, _ = self._cbs
            self._solvers[variant] = ca.nlpsol(f"nlp_{variant}", "ipopt", {"x": self._x, "f": f_cb(self._x), "g": g_cb(self._x)}, opts)
        return self._solvers[variant]

    def g(self, x):
        h = self.prob.ineq(x)
        pairs = self.prob.comp_pairs
        return np.concatenate([self.prob.eq(x), h, h[pairs[:, 0]] * h[pairs[:, 1]]])

    def jac_values(self, x):
        prob = self.prob
        h = prob.ineq(x)
        iv = prob.ineq_jac.values(x)
        pairs = prob.comp_pairs
        vals = np.concatenate([
            prob.eq_jac.values(x),
            iv,
            iv[self._sel_i] * h[pairs[self._pair_i, 1]],
            iv[self._sel_j] * h[pairs[self._pair_j, 0]],
        ])
        return self.jac_pat.collect(vals)

    def hess_values(self, x, lam_f, lam_g):
        prob = self.prob
        m_eq, m_in = prob.m_eq, prob.m_in
        lam_eq = lam_g[:m_eq]
        lam_in = np.array(lam_g[m_eq:m_eq + m_in], dtype=float)
        lam_p = lam_g[m_eq + m_in:]
        pairs = prob.comp_pairs
        if len(pairs):
            h = prob.ineq(x)
            np.add.at(lam_in, pairs[:, 0], lam_p * h[pairs[:, 1]])
            np.add.at(lam_in, pairs[:, 1], lam_p * h[pairs[:, 0]])
            iv = prob.ineq_jac.values(x)
            outer = lam_p[self._op] * iv[self._oi] * iv[self._oj] * self._odiag
        else:
            outer = np.zeros(0)
        base = prob.hessian(x, lam_f, lam_eq, lam_in)
        return self.hess_pat.collect(np.concatenate([base, outer]))

    def bounds(self, delta):
        m_eq, m_in = self.prob.m_eq, self.prob.m_in
        # aim slightly inside the band so IPOPT's feasibility tolerance cannot push products past delta
        lbg = np.concatenate([np.zeros(m_eq), np.zeros(m_in), np.full(self.n_pairs, -np.inf)])
        ubg = np.concatenate([np.zeros(m_eq), np.full(m_in, np.inf), np.full(self.n_pairs, PAIR_TARGET * delta)])
        return lbg, ubg


_STATUS = {
    "Solve_Succeeded": "converged",
    "Solved_To_Acceptable_Level": "converged",
    "Maximum_Iterations_Exceeded": "max-iter",
    "Infeasible_Problem_Detected": "infeasible",
    "Restoration_Failed": "failed",
    "Error_In_Step_Computation": "singular",
}


def residuals(prob: NlpProblem, x, lam_g=None, lam_x=None) -> dict:
    """Feasibility, complementarity and (if multipliers given) scaled stationarity."""
    eq = prob.eq(x)
    h = prob.ineq(x)
    viol = max(
        float(np.max(-h, initial=0.0)),
        float(np.max(prob.lb - x, initial=0.0)),
        float(np.max(x - prob.ub, initial=0.0)),
    )
    comp = prob.comp_products(x)
    out = {
        "eq": float(np.max(np.abs(eq), initial=0.0)),
        "ineq": viol,
        "comp": float(np.max(comp, initial=0.0)),
        "stationarity": float("nan"),
    }
    if lam_g is not None:
        m_eq, m_in = prob.m_eq, prob.m_in
        J = [prob.eq_jac.matrix(x), prob.ineq_jac.matrix(x)]
        grad = prob.gradient(x) + J[0].T @ lam_g[:m_eq] + J[1].T @ lam_g[m_eq:m_eq + m_in]
        lam_p = lam_g[m_eq + m_in:]
        if len(prob.comp_pairs):
            Jin = J[1]
            i, j = prob.comp_pairs[:, 0], prob.comp_pairs[:, 1]
            grad = grad + Jin[i].T @ (lam_p * h[j]) + Jin[j].T @ (lam_p * h[i])
        grad = grad + lam_x
        lam_all = np.concatenate([lam_g, lam_x])
        s_d = max(100.0, np.sum(np.abs(lam_all)) / max(len(lam_all), 1)) / 100.0
        out["stationarity"] = float(np.max(np.abs(grad), initial=0.0) / s_d)
    return out


def solve(prob: NlpProblem, opts: Optional[SolverOptions] = None, x0=None) -> SolveReport:
    """Relaxation homotopy over ``opts.schedule``; each stage warm-starts the next."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    nlp = _SmoothNlp(prob, opts)
    x = np.clip(np.asarray(prob.x0 if x0 is None else x0, dtype=float), prob.lb, prob.ub)
    lam_g = lam_x = None
    iters, status, failed = [], "converged", None
    delta = None
    schedule = opts.schedule if len(prob.comp_pairs) else opts.schedule[-1:]
    for stage, delta in enumerate(schedule):
        lbg, ubg = nlp.bounds(delta)
        attempts = ["adaptive", "warm", "cold"] if lam_g is not None else ["adaptive", "cold"]
        stage_ok = False
        for variant in attempts[: 1 + opts.retries]:
            S = nlp.solver(variant)
            kw = dict(x0=x, lbx=prob.lb, ubx=prob.ub, lbg=lbg, ubg=ubg)
            if variant == "warm":
                kw.update(lam_g0=lam_g, lam_x0=lam_x)
            res = S(**kw)
            st = S.stats()
            iters.append(int(st.get("iter_count", 0)))
            ret = st.get("return_status", "unknown")
            mapped = _STATUS.get(ret, "failed")
            log.info("stage %d delta=%.0e variant=%s: %s (%d it)", stage, delta, variant, ret, iters[-1])
            if opts.verbose:
                print(f"  stage {stage} delta={delta:.0e} [{variant}] {ret} it={iters[-1]}")
            x_new = np.asarray(res["x"]).ravel()
            if mapped == "converged":
                x = x_new
                lam_g = np.asarray(res["lam_g"]).ravel()
                lam_x = np.asarray(res["lam_x"]).ravel()
                stage_ok = True
                break
            status = mapped
        if not stage_ok:
            failed = stage
            x = x_new if np.all(np.isfinite(x_new)) else x
            break
        status = "converged"
    r = residuals(prob, x, lam_g, lam_x) if lam_g is not None else residuals(prob, x)
    if status == "converged":
        if not (r["eq"] <= opts.tol_feasibility * 100 and r["ineq"] <= opts.tol_feasibility * 100
                and r["comp"] <= max(opts.tol_complementarity, delta)):
            status = "failed"
    return SolveReport(
        status=status,
        x=x,
        objective=float(prob.objective(x)),
        delta=float(delta),
        stage_iterations=tuple(iters),
        eq_residual=r["eq"],
        ineq_violation=r["ineq"],
        comp_residual=r["comp"],
        stationarity=r["stationarity"],
        failed_stage=failed,
        wall_time=time.perf_counter() - t0,
        lam_g=lam_g,
        lam_x=lam_x,
    )


def check_derivatives(prob: NlpProblem, x, step: float = 1e-6) -> float:
    """Largest relative error of supplied Jacobians/gradient against central differences."""
    x = np.asarray(x, dtype=float)
    Je = prob.eq_jac.matrix(x).toarray()
    Ji = prob.ineq_jac.matrix(x).toarray()
    g = prob.gradient(x)
    fe = np.zeros_like(Je)
    fi = np.zeros_like(Ji)
    fg = np.zeros_like(g)
    for k in range(prob.n):
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        h = xp[k] - xm[k]  # the step actually taken after rounding
        fe[:, k] = (prob.eq(xp) - prob.eq(xm)) / h
        fi[:, k] = (prob.ineq(xp) - prob.ineq(xm)) / h
        fg[k] = (prob.objective(xp) - prob.objective(xm)) / h
    worst = 0.0
    for A, F in ((Je, fe), (Ji, fi), (g[None, :], fg[None, :])):
        if A.size == 0:
            continue
        scale = np.maximum(1.0, np.abs(F))
        worst = max(worst, float(np.max(np.abs(A - F) / scale)))
    return worst


def check_hessian(prob: NlpProblem, x, lam_eq, lam_in, obj_factor=1.0, step: float = 1e-6) -> float:
    """Relative error of the Lagrangian Hessian against differences of the gradients."""
    from scipy.sparse import coo_matrix

    def lag_grad(z):
        return (obj_factor * prob.gradient(z) + prob.eq_jac.matrix(z).T @ lam_eq
                + prob.ineq_jac.matrix(z).T @ lam_in)

    H = coo_matrix((prob.hessian(x, obj_factor, lam_eq, lam_in), (prob.hess_rows, prob.hess_cols)),
                   shape=(prob.n, prob.n)).toarray()
    H = np.triu(H) + np.triu(H, 1).T
    F = np.zeros_like(H)
    for k in range(prob.n):
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        F[:, k] = (lag_grad(xp) - lag_grad(xm)) / (xp[k] - xm[k])
    return float(np.max(np.abs(H - F) / np.maximum(1.0, np.abs(F)), initial=0.0))
