"""Kinematic bicycle model in road-aligned coordinates.

Provides the nonlinear continuous-time dynamics, its analytic Jacobians
about the current state with zero input, the zero-order-hold discrete
model used by the trajectory planner, and the RK4 plant used as ground
truth in closed-loop simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

SINGULARITY_TOL = 1e-6


class SingularityError(ValueError):
    """Lateral offset too close to the curvature center (1 - kappa*d ~ 0)."""


@dataclass(frozen=True)
class EgoState:
    s: float
    d: float
    phi: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.d, self.phi, self.v])

    @staticmethod
    def from_array(x) -> "EgoState":
        return EgoState(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class EgoInput:
    a: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.delta])


@dataclass(frozen=True)
class EgoParams:
    l_f: float = 2.0
    l_r: float = 2.0
    w_veh: float = 2.0
    l_veh: float = 5.0
    v_max: float = 13.0
    w_lane: float = 3.0
    u_min: tuple = (-9.0, -0.52)
    u_max: tuple = (5.0, 0.52)
    du_min: tuple = (-9.0, -0.4)
    du_max: tuple = (9.0, 0.4)

    def __post_init__(self):
        if min(self.l_f, self.l_r, self.w_veh, self.l_veh, self.w_lane) <= 0:
            raise ValueError("vehicle dimensions must be positive")
        if not all(lo < hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError("input bounds must be ordered")
        if not all(lo < hi for lo, hi in zip(self.du_min, self.du_max)):
            raise ValueError("rate bounds must be ordered")

    def saturate(self, u: EgoInput) -> EgoInput:
        return EgoInput(
            a=float(np.clip(u.a, self.u_min[0], self.u_max[0])),
            delta=float(np.clip(u.delta, self.u_min[1], self.u_max[1])),
        )


@dataclass(frozen=True)
class LinearDiscreteModel:
    """Discrete prediction model: next = offset + A_d @ xi + B_d @ u."""

    A_d: np.ndarray
    B_d: np.ndarray
    offset: np.ndarray
    T: float

    def step(self, xi: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.offset + self.A_d @ xi + self.B_d @ u


def _slip_angle(delta: float, params: EgoParams) -> float:
    return float(np.arctan(params.l_r / (params.l_f + params.l_r) * np.tan(delta)))


def _check_singularity(d: float, kappa: float):
    if abs(1.0 - kappa * d) <= SINGULARITY_TOL:
        raise SingularityError(f"1 - kappa*d = {1.0 - kappa * d:.2e}")


def continuous_dynamics(xi: EgoState, u: EgoInput, kappa: float, params: EgoParams) -> np.ndarray:
    """Time derivative [s_dot, d_dot, phi_dot, v_dot] of the bicycle model."""
    _check_singularity(xi.d, kappa)
    alpha = _slip_angle(u.delta, params)
    denom = 1.0 - kappa * xi.d
    c = np.cos(alpha + xi.phi)
    s_dot = xi.v * c / denom
    d_dot = xi.v * np.sin(alpha + xi.phi)
    phi_dot = xi.v * (np.sin(alpha) / params.l_r - kappa * c / denom)
    return np.array([s_dot, d_dot, phi_dot, u.a])


def linearize(xi0: EgoState, kappa: float, params: EgoParams):
    """Analytic Jacobians (A_l, B_l) at (xi0, u0 = 0).

    The curvature derivative with respect to s is treated as zero, so the
    first column of A_l vanishes.
    """
    _check_singularity(xi0.d, kappa)
    d, phi, v = xi0.d, xi0.phi, xi0.v
    denom = 1.0 - kappa * d
    cphi = np.cos(phi)  # alpha = 0 at u0
    sphi = np.sin(phi)
    c_alpha = params.l_r / (params.l_f + params.l_r)  # d(alpha)/d(delta) at delta = 0

    A = np.zeros((4, 4))
    # ds_dot / d(.)
    A[0, 1] = v * cphi * kappa / denom**2
    A[0, 2] = -v * sphi / denom
    A[0, 3] = cphi / denom
    # dd_dot / d(.)
    A[1, 2] = v * cphi
    A[1, 3] = sphi
    # dphi_dot / d(.)
    A[2, 1] = -v * kappa * cphi * kappa / denom**2
    A[2, 2] = v * kappa * sphi / denom
    A[2, 3] = -kappa * cphi / denom

    B = np.zeros((4, 2))
    B[3, 0] = 1.0
    B[0, 1] = -v * sphi / denom * c_alpha
    B[1, 1] = v * cphi * c_alpha
    B[2, 1] = v * c_alpha * (1.0 / params.l_r + kappa * sphi / denom)
    return A, B


def discretize(A_l: np.ndarray, B_l: np.ndarray, f0: np.ndarray, xi0: EgoState, T: float) -> LinearDiscreteModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if T <= 0:
        raise ValueError("sampling time must be positive")
    n, m = A_l.shape[0], B_l.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_l * T
    M[:n, n:] = B_l * T
    E = expm(M)
    A_d = E[:n, :n]
    B_d = E[:n, n:]
    x0 = xi0.as_array()
    offset = x0 + f0 * T - A_d @ x0
    return LinearDiscreteModel(A_d=A_d, B_d=B_d, offset=offset, T=T)


def linear_prediction_model(xi0: EgoState, kappa: float, params: EgoParams, T: float) -> LinearDiscreteModel:
    """Linearize at (xi0, 0) and discretize in one call."""
    A_l, B_l = linearize(xi0, kappa, params)
    f0 = continuous_dynamics(xi0, EgoInput(0.0, 0.0), kappa, params)
    return discretize(A_l, B_l, f0, xi0, T)


def plant_step(xi: EgoState, u: EgoInput, path, T: float, params: EgoParams, substeps: int = 10) -> EgoState:
    """Integrate the full nonlinear dynamics with fixed-step RK4.

    Curvature is re-queried at every stage evaluation; velocity is clamped
    at zero from below (the kinematic model is invalid in reverse).
    """
    u = params.saturate(u)
    x = xi.as_array()
    h = T / substeps

    def f(x):
        state = EgoState.from_array(x)
        kappa = path.curvature_at(min(max(state.s, 0.0), path.total_length))
        return continuous_dynamics(state, u, kappa, params)

    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if x[3] < 0.0:
            x[3] = 0.0
    return EgoState.from_array(x)
