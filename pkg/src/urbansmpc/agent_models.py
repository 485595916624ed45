"""Stochastic point-mass models for target vehicles and pedestrians.

Target vehicles (TVs) track a lane center and a reference speed through a
saturated LQ-style feedback; pedestrians are driven by pure noise.  Both
share the discrete double-integrator matrices parameterized by the
sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STABILITY_TOL = 1e-9


class AgentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AgentState:
    """World-frame point-mass state [x, vx, y, vy]."""

    x: float
    vx: float
    y: float
    vy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.vx, self.y, self.vy])

    @staticmethod
    def from_array(z) -> "AgentState":
        return AgentState(float(z[0]), float(z[1]), float(z[2]), float(z[3]))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


def point_mass_matrices(T: float):
    """Discrete double-integrator (A, B) for one agent, sampling time T."""
    if T <= 0:
        raise ValueError("sampling time must be positive")
    A = np.array(
        [
            [1.0, T, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, T],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * T * T, 0.0],
            [T, 0.0],
            [0.0, 0.5 * T * T],
            [0.0, T],
        ]
    )
    return A, B


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class TVConfig:
    """Target vehicle: lane-center reference, feedback gain, noise, bounds.

    The reference is a lane-center line through `ref_point` with direction
    `heading`, plus a longitudinal reference speed.  Feedback, saturation
    and noise all live in the TV's local (travel-aligned) frame; the
    longitudinal position error is zeroed because the longitudinal
    reference is given in velocity only.
    """

    heading: float
    ref_point: tuple
    ref_speed: float
    K: np.ndarray
    sigma_w: np.ndarray
    u_min: tuple = (-9.0, -0.4)
    u_max: tuple = (5.0, 0.4)
    length: float = 5.0
    width: float = 2.0

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape != (2, 4):
            raise AgentConfigError("feedback gain must be 2x4")
        mask = np.array([[1, 0, 1, 1], [1, 1, 0, 0]], dtype=bool)
        if np.any(K[mask] != 0.0):
            raise AgentConfigError("feedback gain must have the [[0,k12,0,0],[0,0,k21,k22]] sparsity")
        _check_psd(np.asarray(self.sigma_w, dtype=float), "TV noise covariance")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "sigma_w", np.asarray(self.sigma_w, dtype=float))

    def local_error(self, state: AgentState) -> np.ndarray:
        """Tracking error in the local frame, longitudinal position zeroed."""
        R = _rotation(self.heading)
        rel = R @ (state.position - np.asarray(self.ref_point, dtype=float))
        vel = R @ state.velocity
        return np.array([0.0, vel[0] - self.ref_speed, rel[1], vel[1]])

    def feedback(self, state: AgentState) -> np.ndarray:
        """Saturated local-frame feedback input."""
        u = self.K @ self.local_error(state)
        return np.clip(u, self.u_min, self.u_max)


@dataclass(frozen=True)
class PedConfig:
    """Pedestrian: pure-noise input, square footprint.

    `frame_heading` orients the noise covariance axes in the world; the
    mean motion comes entirely from the initial velocity.
    """

    sigma_w: np.ndarray
    length: float = 1.0
    width: float = 1.0
    frame_heading: float = 0.0

    def __post_init__(self):
        _check_psd(np.asarray(self.sigma_w, dtype=float), "pedestrian noise covariance")
        object.__setattr__(self, "sigma_w", np.asarray(self.sigma_w, dtype=float))


def _check_psd(M: np.ndarray, name: str):
    if M.shape != (2, 2):
        raise AgentConfigError(f"{name} must be 2x2")
    if not np.allclose(M, M.T, atol=1e-12):
        raise AgentConfigError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(M)) < -1e-12:
        raise AgentConfigError(f"{name} must be positive semidefinite")


def tv_feedback(state: AgentState, cfg: TVConfig) -> np.ndarray:
    return cfg.feedback(state)


def closed_loop_matrix(cfg: TVConfig, T: float) -> np.ndarray:
    """A + B K in the TV's local frame."""
    A, B = point_mass_matrices(T)
    return A + B @ cfg.K


def assert_stable_feedback(cfg: TVConfig, T: float):
    """Check all feedback modes are strictly stable.

    The longitudinal position is a pure integrator (no position feedback),
    so exactly one eigenvalue sits on the unit circle; everything else
    must be strictly inside.
    """
    eig = np.abs(np.linalg.eigvals(closed_loop_matrix(cfg, T)))
    marginal = np.sum(eig >= 1.0 - STABILITY_TOL)
    if marginal > 1 or np.any(eig > 1.0 + STABILITY_TOL):
        raise AgentConfigError(f"unstable TV feedback at T={T}: |eig| = {np.sort(eig)}")


def _world_input(cfg, u_local: np.ndarray) -> np.ndarray:
    theta = cfg.heading if isinstance(cfg, TVConfig) else cfg.frame_heading
    return _rotation(theta).T @ u_local


def agent_sim_step(state: AgentState, cfg, w_local: np.ndarray, T: float) -> AgentState:
    """One stochastic step; `w_local` is a noise draw in the agent frame."""
    A, B = point_mass_matrices(T)
    if isinstance(cfg, TVConfig):
        u_local = cfg.K @ cfg.local_error(state) + np.asarray(w_local, dtype=float)
        u_local = np.clip(u_local, cfg.u_min, cfg.u_max)
    else:
        u_local = np.asarray(w_local, dtype=float)
    u_world = _world_input(cfg, u_local)
    return AgentState.from_array(A @ state.as_array() + B @ u_world)


def predict_mean(state: AgentState, cfg, N: int, T: float) -> np.ndarray:
    """Noise-free rollout, shape (N+1, 4), row 0 is the current state."""
    if N < 1:
        raise ValueError("need at least one prediction step")
    A, B = point_mass_matrices(T)
    out = np.empty((N + 1, 4))
    x = state.as_array()
    out[0] = x
    for k in range(N):
        if isinstance(cfg, TVConfig):
            u_world = _world_input(cfg, tv_feedback(AgentState.from_array(x), cfg))
        else:
            u_world = np.zeros(2)
        x = A @ x + B @ u_world
        out[k + 1] = x
    return out
