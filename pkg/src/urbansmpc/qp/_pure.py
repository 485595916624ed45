"""Pure-NumPy dense active-set kernel for strictly convex QPs.

Solves min 1/2 z'Hz + g'z  s.t.  A z <= b  with H positive definite,
by a dual active-set method: start at the unconstrained minimum and add
the most-violated constraint (lowest index on ties) until primal
feasibility.  Constraint directions are taken from the precomputed Gram
matrix G = A H^{-1} A', so every inner step costs one small solve.

The compiled kernel in _core implements the identical algorithm; this
module is the import-time fallback and the reference for the benchmark.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2

_VIOL_TOL = 1e-9
_DEP_TOL = 1e-10


def solve_ineq(H, g, A, b, max_iter):
    """Returns (z, lam, status, iterations).  lam has one entry per row of A."""
    n = H.shape[0]
    m = A.shape[0] if A is not None else 0
    chol = cho_factor(H, lower=True)
    z = -cho_solve(chol, g)
    if m == 0:
        return z, np.zeros(0), STATUS_OPTIMAL, 0

    HiAT = cho_solve(chol, A.T)        # n x m
    G = A @ HiAT                       # m x m Gram matrix
    scale = 1.0 + np.abs(b)

    W: list[int] = []
    lam_W: list[float] = []
    iters = 0

    while True:
        viol = A @ z - b
        p = int(np.argmax(viol / scale))
        if viol[p] <= _VIOL_TOL * scale[p]:
            lam = np.zeros(m)
            for i, li in zip(W, lam_W):
                lam[i] = li
            return z, lam, STATUS_OPTIMAL, iters

        t_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                lam = np.zeros(m)
                for i, li in zip(W, lam_W):
                    lam[i] = li
                if t_p > 0:
                    lam[p] += t_p
                return z, lam, STATUS_MAX_ITER, iters

            if W:
                S = G[np.ix_(W, W)]
                rhs = G[W, p]
                w = np.linalg.solve(S, rhs)
                u = HiAT[:, p] - HiAT[:, W] @ w
                curv = G[p, p] - G[p, W] @ w   # = u' H u
            else:
                w = np.zeros(0)
                u = HiAT[:, p]
                curv = G[p, p]

            if curv <= _DEP_TOL * (1.0 + abs(G[p, p])):
                # a_p linearly dependent on the active rows: pure dual step.
                if not np.any(w > _DEP_TOL):
                    return z, np.zeros(m), STATUS_INFEASIBLE, iters
                t1, drop = _blocking_step(lam_W, w)
                lam_W = [li - t1 * wi for li, wi in zip(lam_W, w)]
                t_p += t1
                del W[drop], lam_W[drop]
                continue

            t2 = (float(A[p] @ z) - b[p]) / curv
            t1, drop = _blocking_step(lam_W, w)
            if t1 < t2:
                z = z - t1 * u
                lam_W = [li - t1 * wi for li, wi in zip(lam_W, w)]
                t_p += t1
                del W[drop], lam_W[drop]
                continue
            z = z - t2 * u
            lam_W = [li - t2 * wi for li, wi in zip(lam_W, w)]
            t_p += t2
            W.append(p)
            lam_W.append(t_p)
            break


def _blocking_step(lam_W, w):
    """Smallest dual ratio lam_i / w_i over positive w_i (lowest index ties)."""
    t1 = np.inf
    drop = -1
    for i, (li, wi) in enumerate(zip(lam_W, w)):
        if wi > _DEP_TOL:
            r = li / wi
            if r < t1 - 1e-15:
                t1 = r
                drop = i
    return t1, drop
