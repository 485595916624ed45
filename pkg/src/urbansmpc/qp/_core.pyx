# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense active-set kernel for strictly convex QPs.

Same dual active-set algorithm as the pure NumPy module `_pure`, with
the pivot search, direction solves, and dual ratio tests running as C
loops over small LAPACK factorizations.  Keep the two modules in
lockstep: `_pure.solve_ineq` is the reference implementation and the
backend-equivalence tests compare against it.
"""

import numpy as np

from scipy.linalg.cython_lapack cimport dgesv, dpotrf, dpotrs

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2

cdef double _VIOL_TOL = 1e-9
cdef double _DEP_TOL = 1e-10


cdef int _cholesky(double[::1, :] Hf) except -1:
    cdef int n = Hf.shape[0]
    cdef int info = 0
    dpotrf("L", &n, &Hf[0, 0], &n, &info)
    if info != 0:
        raise np.linalg.LinAlgError("H is not positive definite")
    return 0


cdef void _chol_solve(double[::1, :] Hf, double[::1, :] X):
    """In place: X <- H^{-1} X using the dpotrf factor stored in Hf."""
    cdef int n = Hf.shape[0]
    cdef int nrhs = X.shape[1]
    cdef int info = 0
    dpotrs("L", &n, &nrhs, &Hf[0, 0], &n, &X[0, 0], &n, &info)


cdef int _solve_active(double[:, ::1] G, long[::1] W, int nw, int p,
                       double[::1] S, double[::1] w_out,
                       int[::1] ipiv) except -1:
    """w_out[:nw] <- G[W,W]^{-1} G[W,p] via dgesv on a fresh copy.

    S is flat scratch holding the nw x nw system column-major.
    """
    cdef int i, j, info = 0, one = 1, n = nw
    for j in range(nw):
        for i in range(nw):
            S[i + j * nw] = G[W[i], W[j]]
        w_out[j] = G[W[j], p]
    dgesv(&n, &one, &S[0], &n, &ipiv[0], &w_out[0], &n, &info)
    if info != 0:
        raise np.linalg.LinAlgError("singular active-set system")
    return 0


cdef (double, int) _blocking_step(double[::1] lam_W, double[::1] w, int nw):
    """Smallest dual ratio lam_i / w_i over positive w_i (lowest index ties)."""
    cdef double t1 = np.inf
    cdef int drop = -1
    cdef int i
    cdef double r
    for i in range(nw):
        if w[i] > _DEP_TOL:
            r = lam_W[i] / w[i]
            if r < t1 - 1e-15:
                t1 = r
                drop = i
    return t1, drop


def solve_ineq(H, g, A, b, int max_iter):
    """Returns (z, lam, status, iterations).  lam has one entry per row of A."""
    cdef int n = H.shape[0]
    cdef int m = A.shape[0] if A is not None else 0

    Hf_arr = np.array(H, dtype=np.float64, order="F")
    cdef double[::1, :] Hf = Hf_arr
    _cholesky(Hf)

    z_arr = np.array(g, dtype=np.float64).reshape(n, 1, order="F").copy(order="F")
    np.negative(z_arr, out=z_arr)
    cdef double[::1, :] z_col = z_arr
    _chol_solve(Hf, z_col)
    z_out = np.ascontiguousarray(z_arr[:, 0])
    if m == 0:
        return z_out, np.zeros(0), STATUS_OPTIMAL, 0

    A_arr = np.ascontiguousarray(A, dtype=np.float64)
    b_arr = np.ascontiguousarray(b, dtype=np.float64)
    HiAT_arr = np.array(A_arr.T, dtype=np.float64, order="F")
    cdef double[::1, :] HiAT_f = HiAT_arr
    _chol_solve(Hf, HiAT_f)
    G_arr = np.ascontiguousarray(A_arr @ HiAT_arr)
    HiAT_c = np.ascontiguousarray(HiAT_arr)

    cdef double[:, ::1] Am = A_arr
    cdef double[::1] bm = b_arr
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] HiAT = HiAT_c
    cdef double[::1] z = z_out

    scale_arr = 1.0 + np.abs(b_arr)
    cdef double[::1] scale = scale_arr

    W_arr = np.empty(n + 1, dtype=np.int64)
    lamW_arr = np.empty(n + 1, dtype=np.float64)
    w_arr = np.empty(n + 1, dtype=np.float64)
    S_arr = np.empty((n + 1) * (n + 1), dtype=np.float64)
    ipiv_arr = np.empty(n + 1, dtype=np.int32)
    u_arr = np.empty(n, dtype=np.float64)
    cdef long[::1] W = W_arr
    cdef double[::1] lam_W = lamW_arr
    cdef double[::1] w = w_arr
    cdef double[::1] S = S_arr
    cdef int[::1] ipiv = ipiv_arr
    cdef double[::1] u = u_arr

    cdef int nw = 0
    cdef long iters = 0
    cdef int i, j, p, drop
    cdef double v, best, t_p, t1, t2, curv, viol_p

    while True:
        # most-violated row, scaled, lowest index on ties
        p = 0
        best = -np.inf
        viol_p = 0.0
        for i in range(m):
            v = -bm[i]
            for j in range(n):
                v += Am[i, j] * z[j]
            if v / scale[i] > best:
                best = v / scale[i]
                p = i
                viol_p = v
        if viol_p <= _VIOL_TOL * scale[p]:
            lam = np.zeros(m)
            for i in range(nw):
                lam[W[i]] = lam_W[i]
            return z_out, lam, STATUS_OPTIMAL, int(iters)

        t_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                lam = np.zeros(m)
                for i in range(nw):
                    lam[W[i]] = lam_W[i]
                if t_p > 0:
                    lam[p] += t_p
                return z_out, lam, STATUS_MAX_ITER, int(iters)

            if nw > 0:
                _solve_active(G, W, nw, p, S, w, ipiv)
                curv = G[p, p]
                for i in range(nw):
                    curv -= G[p, W[i]] * w[i]
                for j in range(n):
                    v = HiAT[j, p]
                    for i in range(nw):
                        v -= HiAT[j, W[i]] * w[i]
                    u[j] = v
            else:
                curv = G[p, p]
                for j in range(n):
                    u[j] = HiAT[j, p]

            if curv <= _DEP_TOL * (1.0 + abs(G[p, p])):
                # a_p linearly dependent on the active rows: pure dual step.
                drop = -1
                for i in range(nw):
                    if w[i] > _DEP_TOL:
                        drop = 0
                        break
                if drop < 0:
                    return z_out, np.zeros(m), STATUS_INFEASIBLE, int(iters)
                t1, drop = _blocking_step(lam_W, w, nw)
                for i in range(nw):
                    lam_W[i] -= t1 * w[i]
                t_p += t1
                _delete_at(W, lam_W, w, &nw, drop)
                continue

            t2 = -bm[p]
            for j in range(n):
                t2 += Am[p, j] * z[j]
            t2 /= curv
            t1, drop = _blocking_step(lam_W, w, nw)
            if t1 < t2:
                for j in range(n):
                    z[j] -= t1 * u[j]
                for i in range(nw):
                    lam_W[i] -= t1 * w[i]
                t_p += t1
                _delete_at(W, lam_W, w, &nw, drop)
                continue
            for j in range(n):
                z[j] -= t2 * u[j]
            for i in range(nw):
                lam_W[i] -= t2 * w[i]
            t_p += t2
            W[nw] = p
            lam_W[nw] = t_p
            nw += 1
            break


cdef void _delete_at(long[::1] W, double[::1] lam_W, double[::1] w,
                     int* nw, int drop):
    cdef int i
    for i in range(drop, nw[0] - 1):
        W[i] = W[i + 1]
        lam_W[i] = lam_W[i + 1]
        w[i] = w[i + 1]
    nw[0] -= 1
