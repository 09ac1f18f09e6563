"""Assemble stage-wise constraint families into an :class:`NlpProblem`.

A family evaluates the same small function at every stage ``k`` on a local
vector ``z[k] = x[idx[k]]``. It returns values ``(K, m)``, local Jacobians
``(K, m, nloc)`` and, when nonlinear, the multiplier-weighted local Hessian
``(K, nloc, nloc)``. Local blocks are scattered into global COO patterns
once; evaluation is fully vectorized over stages.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .solver import NlpProblem, SparseFn


@dataclass
class Family:
    name: str
    idx: np.ndarray  # (K, nloc) global variable indices
    m: int
    fun: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    hess: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.idx = np.atleast_2d(np.asarray(self.idx, dtype=np.int64))

    @property
    def K(self) -> int:
        return self.idx.shape[0]

    @property
    def size(self) -> int:
        return self.K * self.m


def linear_family(name, idx, coeffs, rhs=0.0) -> Family:
    """Rows ``coeffs @ z - rhs``; ``coeffs`` is (m, nloc), shared by all stages."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (idx.shape[0], coeffs.shape[0]))

    def fun(z):
        return z @ coeffs.T - rhs

    def jac(z):
        return np.broadcast_to(coeffs, (z.shape[0],) + coeffs.shape)

    return Family(name, idx, coeffs.shape[0], fun, jac)


class _Block:
    """Stacked families with a fixed global Jacobian pattern."""

    def __init__(self, families: list[Family], n: int):
        self.families = families
        self.n = n
        self.offsets = np.cumsum([0] + [f.size for f in families])
        self.m = int(self.offsets[-1])
        rows, cols = [], []
        for off, f in zip(self.offsets, families):
            K, nl = f.idx.shape
            r = off + np.arange(K)[:, None, None] * f.m + np.arange(f.m)[None, :, None]
            rows.append(np.broadcast_to(r, (K, f.m, nl)).ravel())
            cols.append(np.broadcast_to(f.idx[:, None, :], (K, f.m, nl)).ravel())
        self.rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        self.cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)

    def value(self, x):
        if not self.families:
            return np.zeros(0)
        return np.concatenate([f.fun(x[f.idx]).ravel() for f in self.families])

    def jac_values(self, x):
        if not self.families:
            return np.zeros(0)
        return np.concatenate([np.asarray(f.jac(x[f.idx]), dtype=float).ravel() for f in self.families])

    def sparse(self) -> SparseFn:
        return SparseFn(self.rows, self.cols, self.jac_values, (self.m, self.n))

    def slices(self) -> dict:
        return {f.name: slice(int(a), int(b)) for f, a, b in zip(self.families, self.offsets[:-1], self.offsets[1:])}


def _upper_pairs(idx):
    K, nl = idx.shape
    a = np.broadcast_to(idx[:, :, None], (K, nl, nl))
    b = np.broadcast_to(idx[:, None, :], (K, nl, nl))
    return np.minimum(a, b).ravel(), np.maximum(a, b).ravel()


def build_problem(n, lb, ub, x0, objective: list[Family], eq: list[Family], ineq: list[Family],
                  comp_pairs, meta=None) -> NlpProblem:
    """Objective families are summed; each must have m == 1."""
    E, I = _Block(eq, n), _Block(ineq, n)

    def f(x):
        return float(sum(np.sum(o.fun(x[o.idx])) for o in objective))

    def grad(x):
        g = np.zeros(n)
        for o in objective:
            np.add.at(g, o.idx, np.asarray(o.jac(x[o.idx]))[:, 0, :])
        return g

    # Hessian contributions: objective families, then nonlinear eq / ineq families.
    hess_terms = []  # (family, kind, offset)
    hr, hc = [], []
    for o in objective:
        if o.hess is not None:
            hess_terms.append((o, "obj", 0))
    for block, kind in ((E, "eq"), (I, "in")):
        for off, fam in zip(block.offsets, block.families):
            if fam.hess is not None:
                hess_terms.append((fam, kind, int(off)))
    for fam, _, _ in hess_terms:
        r, c = _upper_pairs(fam.idx)
        hr.append(r)
        hc.append(c)
    hess_rows = np.concatenate(hr) if hr else np.zeros(0, np.int64)
    hess_cols = np.concatenate(hc) if hc else np.zeros(0, np.int64)

    def hessian(x, obj_factor, lam_eq, lam_in):
        out = []
        for fam, kind, off in hess_terms:
            z = x[fam.idx]
            if kind == "obj":
                lam = np.full((fam.K, 1), obj_factor)
            else:
                src = lam_eq if kind == "eq" else lam_in
                lam = np.asarray(src[off:off + fam.size]).reshape(fam.K, fam.m)
            out.append(_symmetrize(fam.hess(z, lam)).ravel())
        return np.concatenate(out) if out else np.zeros(0)

    prob = NlpProblem(
        n=n, lb=np.asarray(lb, float), ub=np.asarray(ub, float), x0=np.asarray(x0, float),
        objective=f, gradient=grad,
        eq=E.value, eq_jac=E.sparse(), ineq=I.value, ineq_jac=I.sparse(),
        hess_rows=hess_rows, hess_cols=hess_cols, hessian=hessian,
        comp_pairs=np.asarray(comp_pairs, dtype=int).reshape(-1, 2),
        m_eq=E.m, m_in=I.m, meta=dict(meta or {}),
    )
    prob.meta["eq_rows"] = E.slices()
    prob.meta["ineq_rows"] = I.slices()
    return prob


def _symmetrize(H):
    """Map full local Hessians onto the upper-triangle pattern from ``_upper_pairs``.

    Each (a, b) entry lands on global (min, max); the full matrix is summed,
    so off-diagonal pairs count twice unless halved here.
    """
    H = np.asarray(H, dtype=float)
    nl = H.shape[-1]
    w = np.full((nl, nl), 0.5)
    np.fill_diagonal(w, 1.0)
    return H * w
