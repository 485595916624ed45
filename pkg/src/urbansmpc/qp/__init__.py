"""Dense convex QP interface shared by both planners.

min 1/2 z'Hz + g'z   s.t.  A_ineq z <= b_ineq,  A_eq z = b_eq

A subset of inequality rows may be softened: those rows get an explicit
nonnegative slack variable with quadratic weight `rho_slack` and a linear
penalty `slack_lin`, so the solver always returns a usable input even
when a safety distance is already violated.

The hot kernel is the compiled extension `_core` (Cython); the pure
NumPy `_pure` module implements the identical algorithm and is selected
automatically when the extension is unavailable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _pure

try:  # pragma: no cover - exercised only when the extension is built
    from . import _core

    _HAVE_CORE = True
except ImportError:  # pragma: no cover
    _core = None
    _HAVE_CORE = False

if os.environ.get("URBANSMPC_PURE_QP"):
    _HAVE_CORE = False


def backend_name() -> str:
    return "compiled" if _HAVE_CORE else "pure"


def _kernel():
    return _core if _HAVE_CORE else _pure

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"

_STATUS_NAMES = {0: STATUS_OPTIMAL, 1: STATUS_INFEASIBLE, 2: STATUS_MAX_ITER}


class QpDimensionError(ValueError):
    pass


@dataclass
class QuadraticProgram:
    H: np.ndarray
    g: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    soft_rows: np.ndarray | None = None  # indices into A_ineq
    rho_slack: float = 1e5
    slack_lin: float = 1e3

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.g.shape != (n,):
            raise QpDimensionError("H must be n x n and g length n")
        if not np.allclose(self.H, self.H.T, atol=1e-9):
            raise QpDimensionError("H must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (self.H + self.H.T))) < -1e-8:
            raise QpDimensionError("H must be PSD (within -1e-8)")
        for Aname, bname in (("A_ineq", "b_ineq"), ("A_eq", "b_eq")):
            A = getattr(self, Aname)
            b = getattr(self, bname)
            if (A is None) != (b is None):
                raise QpDimensionError(f"{Aname} and {bname} must be given together")
            if A is not None:
                A = np.atleast_2d(np.asarray(A, dtype=float))
                b = np.asarray(b, dtype=float).ravel()
                if A.shape[1] != n or A.shape[0] != b.shape[0]:
                    raise QpDimensionError(f"{Aname}/{bname} dimensions inconsistent")
                setattr(self, Aname, A)
                setattr(self, bname, b)
        if self.soft_rows is not None:
            self.soft_rows = np.asarray(self.soft_rows, dtype=int)
            if self.A_ineq is None or (len(self.soft_rows) and self.soft_rows.max() >= self.A_ineq.shape[0]):
                raise QpDimensionError("soft_rows must index rows of A_ineq")

    @property
    def n(self) -> int:
        return self.H.shape[0]


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    slacks: np.ndarray | None = None
    lam_ineq: np.ndarray | None = None


def _soften(qp: QuadraticProgram):
    """Rewrite soft rows a'z <= b as a'z - t <= b, t >= 0, quadratic+linear
    slack penalty.  Returns the augmented (H, g, A, b) and slack count."""
    soft = np.zeros(qp.A_ineq.shape[0], dtype=bool) if qp.A_ineq is not None else np.zeros(0, dtype=bool)
    if qp.soft_rows is not None:
        soft[qp.soft_rows] = True
    ns = int(soft.sum())
    n = qp.n
    H = np.zeros((n + ns, n + ns))
    H[:n, :n] = qp.H
    g = np.concatenate([qp.g, np.full(ns, qp.slack_lin)])
    for i in range(ns):
        H[n + i, n + i] = qp.rho_slack

    rows = []
    rhs = []
    if qp.A_ineq is not None:
        m = qp.A_ineq.shape[0]
        Aaug = np.zeros((m, n + ns))
        Aaug[:, :n] = qp.A_ineq
        slack_col = {}
        j = 0
        for i in range(m):
            if soft[i]:
                Aaug[i, n + j] = -1.0
                slack_col[i] = j
                j += 1
        rows.append(Aaug)
        rhs.append(qp.b_ineq)
        # slack nonnegativity: -t <= 0
        Ts = np.zeros((ns, n + ns))
        for i in range(ns):
            Ts[i, n + i] = -1.0
        rows.append(Ts)
        rhs.append(np.zeros(ns))
    A = np.vstack(rows) if rows else None
    b = np.concatenate(rhs) if rows else None
    return H, g, A, b, ns


def _nullspace(A: np.ndarray, rcond: float = 1e-10):
    u, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > rcond * (sv[0] if len(sv) else 1.0)))
    return vt[rank:].T


def solve(qp: QuadraticProgram, max_iter: int | None = None) -> QpSolution:
    """Solve the QP; deterministic (lowest-index most-violated pivoting)."""
    H, g, A, b, ns = _soften(qp)
    n_aug = H.shape[0]
    m = A.shape[0] if A is not None else 0
    if max_iter is None:
        max_iter = 50 * (n_aug + m + (qp.A_eq.shape[0] if qp.A_eq is not None else 0))

    # Eliminate equalities by nullspace reduction.
    if qp.A_eq is not None and qp.A_eq.shape[0] > 0:
        Aeq = np.zeros((qp.A_eq.shape[0], n_aug))
        Aeq[:, : qp.n] = qp.A_eq
        z_p, *_ = np.linalg.lstsq(Aeq, qp.b_eq, rcond=None)
        if np.linalg.norm(Aeq @ z_p - qp.b_eq) > 1e-8 * (1.0 + np.linalg.norm(qp.b_eq)):
            return QpSolution(z=np.zeros(qp.n), objective=np.inf, status=STATUS_INFEASIBLE)
        Z = _nullspace(Aeq)
    else:
        z_p = np.zeros(n_aug)
        Z = np.eye(n_aug)

    if Z.shape[1] == 0:
        z_full = z_p
        status = STATUS_OPTIMAL
        iters = 0
        lam = np.zeros(m)
        if A is not None and np.any(A @ z_full - b > 1e-8):
            status = STATUS_INFEASIBLE
    else:
        Hr = Z.T @ H @ Z
        Hr = _regularize(Hr)
        gr = Z.T @ (g + H @ z_p)
        Ar = A @ Z if A is not None else None
        br = b - A @ z_p if A is not None else None
        y, lam, code, iters = _kernel().solve_ineq(Hr, gr, Ar, br, max_iter)
        z_full = z_p + Z @ y
        status = _STATUS_NAMES[int(code)]

    z = z_full[: qp.n]
    slacks = z_full[qp.n :] if ns else None
    obj = float(0.5 * z_full @ H @ z_full + g @ z_full)
    res = _kkt_residuals(H, g, A, b, qp, z_full, lam)
    return QpSolution(
        z=z,
        objective=obj,
        status=status,
        residuals=res,
        iterations=int(iters),
        slacks=slacks,
        lam_ineq=lam[: qp.A_ineq.shape[0]] if qp.A_ineq is not None and lam is not None and len(lam) else None,
    )


def _regularize(Hr: np.ndarray) -> np.ndarray:
    """Jitter a numerically semidefinite reduced Hessian up to PD."""
    eigmin = np.min(np.linalg.eigvalsh(0.5 * (Hr + Hr.T)))
    if eigmin < 1e-10:
        Hr = Hr + (1e-10 - min(eigmin, 0.0)) * np.eye(Hr.shape[0])
    return 0.5 * (Hr + Hr.T)


def _kkt_residuals(H, g, A, b, qp, z_full, lam):
    """Stationarity / primal / complementarity residuals of the softened
    problem, with equality multipliers recovered by least squares."""
    grad = H @ z_full + g
    if A is not None and lam is not None and len(lam):
        grad = grad + A.T @ lam
    if qp.A_eq is not None and qp.A_eq.shape[0] > 0:
        Aeq = np.zeros((qp.A_eq.shape[0], len(z_full)))
        Aeq[:, : qp.n] = qp.A_eq
        nu, *_ = np.linalg.lstsq(Aeq.T, -grad, rcond=None)
        grad = grad + Aeq.T @ nu
        primal_eq = float(np.max(np.abs(Aeq @ z_full - qp.b_eq)))
    else:
        primal_eq = 0.0
    if A is not None:
        slack = A @ z_full - b
        primal = max(primal_eq, float(np.max(slack)) if len(slack) else 0.0)
        comp = float(np.abs(lam @ slack)) if lam is not None and len(lam) else 0.0
    else:
        primal = primal_eq
        comp = 0.0
    return {
        "stationarity": float(np.max(np.abs(grad))),
        "primal": primal,
        "complementarity": comp,
    }


def dump_qp(qp: QuadraticProgram, fh):
    """Plain-text matrix dump for debugging (CLI --dump-qp)."""
    np.savetxt(fh, qp.H, header=f"H {qp.H.shape[0]}x{qp.H.shape[1]}", comments="# ")
    np.savetxt(fh, qp.g[None, :], header="g", comments="# ")
    if qp.A_ineq is not None:
        np.savetxt(fh, qp.A_ineq, header="A_ineq", comments="# ")
        np.savetxt(fh, qp.b_ineq[None, :], header="b_ineq", comments="# ")
    if qp.A_eq is not None:
        np.savetxt(fh, qp.A_eq, header="A_eq", comments="# ")
        np.savetxt(fh, qp.b_eq[None, :], header="b_eq", comments="# ")
