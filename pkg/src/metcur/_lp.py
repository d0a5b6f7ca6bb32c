"""Small linear programs over 1-Lipschitz functions.

The central routine computes ``sup { sum_q a_q f(q) : f 1-Lipschitz }`` for a
coefficient vector ``a`` with zero sum (a Kantorovich-Rubinstein norm). Only
the support of ``a`` enters the program: any 1-Lipschitz function on the
support extends to the whole space with the same constant (inf-convolution),
so restricting the variables loses nothing.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import ToleranceError

HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
        method="highs", options=HIGHS_OPTIONS,
    )
    if res.status != 0:
        raise ToleranceError(f"linear program failed: {res.message}")
    return res


def pair_constraints(m):
    """Sparse rows encoding ``f_p - f_q <= d_pq`` for all ordered pairs p != q."""
    p, q = np.nonzero(~np.eye(m, dtype=bool))
    r = np.arange(p.size)
    A = sparse.csr_matrix(
        (np.r_[np.ones(p.size), -np.ones(p.size)], (np.r_[r, r], np.r_[p, q])),
        shape=(p.size, m),
    )
    return A, p, q


def kr_sup(a, dist, tol=0.0):
    """Maximize ``a . f`` over 1-Lipschitz ``f`` (``a`` should sum to zero).

    Returns ``(value, f)`` where ``f`` is a 1-Lipschitz witness defined on
    every point.
    """
    a = np.asarray(a, dtype=float)
    n = a.size
    S = np.flatnonzero(np.abs(a) > tol)
    if S.size == 0:
        return 0.0, np.zeros(n)
    aS = a[S]
    pos = aS > 0
    dS = dist[np.ix_(S, S)]
    if pos.sum() == 1 or (~pos).sum() == 1:
        # one point against the rest: a distance function is optimal
        single = pos if pos.sum() == 1 else ~pos
        j = int(np.flatnonzero(single)[0])
        sign = 1.0 if pos[j] else -1.0
        fS = -sign * dS[j]
        value = float(np.abs(aS) @ dS[j])
    else:
        m = S.size
        A, p, q = pair_constraints(m)
        b = dS[p, q]
        bounds = [(None, None)] * m
        bounds[0] = (0.0, 0.0)
        res = solve_lp(-aS, A_ub=A, b_ub=b, bounds=bounds)
        fS = res.x
        value = float(aS @ fS)
    f = (fS[None, :] + dist[:, S]).min(axis=1)
    f[S] = fS
    return value, f
