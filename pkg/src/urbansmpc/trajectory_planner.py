"""Low-level trajectory planner: short-horizon stochastic MPC.

Every control period the planner linearizes the bicycle model at the
current state, predicts every nearby agent, tightens the longitudinal
safety constraints by the propagated uncertainty, condenses the optimal
control problem into a dense QP over the input sequence, and applies the
first optimized input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qp as qpmod
from .agent_models import AgentState, PedConfig, TVConfig, predict_mean, point_mass_matrices
from .ego_dynamics import EgoInput, EgoParams, EgoState, linear_prediction_model
from .path_geometry import NoProjectionError, ReferencePath
from .uncertainty import propagate_covariance, risk_inflation, safety_envelope


@dataclass
class LowLevelConfig:
    N: int = 10
    T: float = 0.2
    Q: np.ndarray = field(default_factory=lambda: np.diag([0.0, 1.0, 1.0, 1.0]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.33, 5.0]))
    S: np.ndarray = field(default_factory=lambda: np.diag([0.33, 15.0]))
    P: np.ndarray = field(default_factory=lambda: np.diag([0.0, 1.0, 1.0, 1.0]))
    beta_tv: float = 0.8
    beta_ped: float = 0.9
    eps_safe_tv: float = 4.0
    eps_safe_ped: float = 1.0
    rho_slack: float = 1e5
    slack_lin: float = 1e3
    sensing_radius: float = 150.0
    occupancy_horizon: float = 15.0  # s, lookahead for the right-of-way test

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        for W in (self.Q, self.R, self.S, self.P):
            if np.min(np.linalg.eigvalsh(0.5 * (W + W.T))) < -1e-10:
                raise ValueError("weight matrices must be PSD")


@dataclass(frozen=True)
class AgentObs:
    """One observed agent: identity, behavior config, current state."""

    name: str
    cfg: object  # TVConfig | PedConfig
    state: AgentState


@dataclass
class PositionalConstraint:
    """Per-step halfspace q_s*s_k + q_d*d_k + q_t <= 0 for k = 1..N."""

    q_s: np.ndarray
    q_d: np.ndarray
    q_t: np.ndarray
    provenance: str  # tv_same_lane | tv_intersection | pedestrian
    soft: bool = True
    agent: str = ""


@dataclass
class ReferenceTrajectory:
    """Per-step state reference; lateral and heading references are zero."""

    v_ref: np.ndarray  # length N+1
    s_ref: np.ndarray  # length N+1, integrated, logging only
    source: str = "static_cruise"

    @staticmethod
    def cruise(v: float, s0: float, N: int, T: float) -> "ReferenceTrajectory":
        v_ref = np.full(N + 1, v)
        s_ref = s0 + v * T * np.arange(N + 1)
        return ReferenceTrajectory(v_ref=v_ref, s_ref=s_ref, source="static_cruise")


def _ego_world(ego: EgoState, path: ReferencePath) -> np.ndarray:
    from .path_geometry import CurvilinearPose

    return path.curvilinear_to_world(CurvilinearPose(ego.s, ego.d, 0.0))


def _project_prediction(path: ReferencePath, traj: np.ndarray):
    """Project a mean prediction onto the path; returns (s, d) arrays.

    Steps that leave the projection corridor reuse the previous value.
    """
    s = np.empty(len(traj))
    d = np.empty(len(traj))
    prev = None
    for k, row in enumerate(traj):
        try:
            pose = path.world_to_curvilinear(row[[0, 2]])
            prev = (pose.s, pose.d)
        except NoProjectionError:
            if prev is None:
                raise
        s[k], d[k] = prev
    return s, d


def _is_same_lane_tv(obs: AgentObs, path: ReferencePath, params: EgoParams):
    """Same lane, same direction, within half a lane of the centerline."""
    try:
        pose = path.world_to_curvilinear(obs.state.position)
    except NoProjectionError:
        return None
    if abs(pose.d) >= params.w_lane / 2:
        return None
    tangent = np.array([np.cos(pose.heading_of_path), np.sin(pose.heading_of_path)])
    if float(obs.state.velocity @ tangent) <= 0.0 and np.linalg.norm(obs.state.velocity) > 1e-9:
        return None
    return pose


def _tv_conflict_interval(obs: AgentObs, path: ReferencePath, params: EgoParams):
    """Arc interval where the ego path runs through the TV's lane corridor.

    The corridor is the line through the TV's lane anchor along its
    heading, widened by both half widths plus a small margin.
    """
    direction = np.array([np.cos(obs.cfg.heading), np.sin(obs.cfg.heading)])
    anchor = np.asarray(obs.cfg.ref_point, dtype=float)
    clear = (params.w_veh + obs.cfg.width) / 2.0 + 0.5
    ss = np.arange(0.0, path.total_length, 0.5)
    pts = np.array([path.point_at(s) for s in ss])
    rel = pts - anchor
    dist = np.abs(direction[0] * rel[:, 1] - direction[1] * rel[:, 0])
    idx = np.nonzero(dist <= clear)[0]
    if len(idx) == 0:
        return None
    # first contiguous run
    end = idx[0]
    for j in idx[1:]:
        if j != end + 1:
            break
        end = j
    return float(ss[idx[0]]), float(ss[end])


def earliest_exit_time(ego: EgoState, target_s: float, params: EgoParams) -> float:
    """Time to reach target_s at full acceleration, speed capped at v_max."""
    dist = target_s - ego.s
    if dist <= 0.0:
        return 0.0
    a = params.u_max[0]
    v0, vm = ego.v, params.v_max
    t_cap = (vm - v0) / a
    d_cap = v0 * t_cap + 0.5 * a * t_cap**2
    if dist <= d_cap:
        return (-v0 + np.sqrt(v0**2 + 2 * a * dist)) / a
    return t_cap + (dist - d_cap) / vm


def tv_conflict_window(
    obs: AgentObs,
    path: ReferencePath,
    params: EgoParams,
    beta: float,
    eps_safe: float,
    horizon: float,
    dt: float,
):
    """Conflict interval on the ego path and the TV's occupancy window.

    Returns (s_lo, s_hi, t_in, t_out) or None when the TV never touches
    the ego path (or never occupies the interval within the horizon).
    An occupancy that extends past the horizon reports t_out = inf.
    """
    interval = _tv_conflict_interval(obs, path, params)
    if interval is None:
        return None
    s_lo, s_hi = interval

    direction = np.array([np.cos(obs.cfg.heading), np.sin(obs.cfg.heading)])
    p_tv = obs.state.position
    q_ends = [(path.point_at(s) - p_tv) @ direction for s in (s_lo, s_hi)]
    q_lo, q_hi = min(q_ends), max(q_ends)

    n_steps = int(np.ceil(horizon / dt))
    traj = predict_mean(obs.state, obs.cfg, n_steps, dt)
    A, B = point_mass_matrices(dt)
    cov = propagate_covariance(A, B, obs.cfg.K, obs.cfg.sigma_w, n_steps)
    e_k = cov.sigma_longitudinal() * np.sqrt(risk_inflation(beta))
    q_k = (traj[:, [0, 2]] - p_tv) @ direction
    half = obs.cfg.length / 2.0 + e_k + eps_safe
    occupied = np.nonzero((q_k + half >= q_lo) & (q_k - half <= q_hi))[0]
    if len(occupied) == 0:
        return None
    t_in = occupied[0] * dt
    # still inside at the end of the lookahead: treat as occupying forever
    t_out = np.inf if occupied[-1] == n_steps else occupied[-1] * dt
    return s_lo, s_hi, t_in, t_out


def _tv_yield_stop_line(
    obs: AgentObs, ego: EgoState, path: ReferencePath, cfg: LowLevelConfig, params: EgoParams
):
    """Right-of-way test against one crossing TV.

    Compares the TV's occupancy window of the conflict corridor against
    the time span the EV needs at its current speed; returns the stop
    line to hold at, or None when no yield is required.
    """
    window = tv_conflict_window(
        obs, path, params, cfg.beta_tv, cfg.eps_safe_tv, cfg.occupancy_horizon, cfg.T
    )
    if window is None:
        return None
    s_lo, s_hi, t_in, t_out = window
    if ego.s >= s_hi + params.l_veh / 2.0:
        return None  # already through
    stop_line = min(path.intersection_entry_s, s_lo) - params.l_veh / 2.0
    # committed: past (or unable to stop before) the line means yielding
    # is no longer an option -- clear the conflict instead
    if ego.s >= stop_line or ego.v**2 / (2.0 * abs(params.u_min[0])) > stop_line - ego.s:
        return None

    v = max(ego.v, 1.0)
    t_reach = max(0.0, (s_lo - params.l_veh / 2.0 - ego.s) / v)
    t_clear = (s_hi + params.l_veh / 2.0 - ego.s) / v
    if t_out < t_reach or t_in > t_clear:
        return None
    return stop_line


def _pedestrian_relevant(
    obs: AgentObs, ego: EgoState, path: ReferencePath, cfg: LowLevelConfig, params: EgoParams
):
    """Crossing predicate: the pedestrian is on the street, or heading for
    it; released only once it is fully across and walking away."""
    traj = predict_mean(obs.state, obs.cfg, cfg.N, cfg.T)
    try:
        s_pred, d_pred = _project_prediction(path, traj)
    except NoProjectionError:
        return None
    if s_pred[0] <= ego.s:  # already passed
        return None
    band = 1.5 * params.w_lane  # both lanes around the reference path
    vd = (d_pred[-1] - d_pred[0]) / (cfg.N * cfg.T)
    on_street = abs(d_pred[0]) <= band
    heading_in = d_pred[0] * vd < 0.0
    if not (on_street or heading_in):
        return None
    return s_pred, d_pred


def generate_constraints(
    ego: EgoState,
    agents: list,
    path: ReferencePath,
    cfg: LowLevelConfig,
    params: EgoParams,
) -> list:
    """Longitudinal safety constraints for every relevant agent.

    All coefficients are computed from the current measurements, before
    the optimization starts.
    """
    out = []
    ego_pos = _ego_world(ego, path)
    A, B = point_mass_matrices(cfg.T)
    decel = abs(params.u_min[0])

    for obs in agents:
        if np.linalg.norm(obs.state.position - ego_pos) > cfg.sensing_radius:
            continue

        if isinstance(obs.cfg, TVConfig):
            pose = _is_same_lane_tv(obs, path, params)
            if pose is not None and pose.s > ego.s:
                traj = predict_mean(obs.state, obs.cfg, cfg.N, cfg.T)
                s_pred, _ = _project_prediction(path, traj)
                cov = propagate_covariance(A, B, obs.cfg.K, obs.cfg.sigma_w, cfg.N)
                speeds = np.linalg.norm(traj[:, [1, 3]], axis=1)
                env = safety_envelope(
                    cov, obs.cfg.length, cfg.beta_tv, cfg.eps_safe_tv, ego.v, speeds, decel
                )
                rhs = s_pred - env.a - params.l_veh / 2.0
                out.append(
                    PositionalConstraint(
                        q_s=np.ones(cfg.N),
                        q_d=np.zeros(cfg.N),
                        q_t=-rhs[1:],
                        provenance="tv_same_lane",
                        agent=obs.name,
                    )
                )
            else:
                stop_line = _tv_yield_stop_line(obs, ego, path, cfg, params)
                if stop_line is not None:
                    out.append(
                        PositionalConstraint(
                            q_s=np.ones(cfg.N),
                            q_d=np.zeros(cfg.N),
                            q_t=np.full(cfg.N, -stop_line),
                            provenance="tv_intersection",
                            agent=obs.name,
                        )
                    )
        elif isinstance(obs.cfg, PedConfig):
            rel = _pedestrian_relevant(obs, ego, path, cfg, params)
            if rel is None:
                continue
            s_pred, _ = rel
            cov = propagate_covariance(A, B, None, obs.cfg.sigma_w, cfg.N)
            # uncertainty axis: along the path tangent at the pedestrian,
            # expressed in the pedestrian's covariance frame
            axis = path.heading_at(s_pred[0]) - obs.cfg.frame_heading
            traj = predict_mean(obs.state, obs.cfg, cfg.N, cfg.T)
            tangent = np.array([np.cos(path.heading_at(s_pred[0])), np.sin(path.heading_at(s_pred[0]))])
            along_speeds = traj[:, [1, 3]] @ tangent
            env = safety_envelope(
                cov, obs.cfg.length, cfg.beta_ped, cfg.eps_safe_ped, ego.v,
                np.maximum(along_speeds, 0.0), decel, axis_angle=axis,
            )
            rhs = s_pred - env.a - params.l_veh / 2.0
            out.append(
                PositionalConstraint(
                    q_s=np.ones(cfg.N),
                    q_d=np.zeros(cfg.N),
                    q_t=-rhs[1:],
                    provenance="pedestrian",
                    agent=obs.name,
                )
            )
    return out


def condense_dynamics(model, x0: np.ndarray, N: int):
    """Stack the prediction xi_1..xi_N as Phi@x0 + Gamma@U + c."""
    n, m = 4, 2
    Phi = np.zeros((N * n, n))
    Gamma = np.zeros((N * n, N * m))
    c = np.zeros(N * n)
    Ak = np.eye(n)
    # powers[k] = A_d^k
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(model.A_d @ powers[-1])
    for k in range(1, N + 1):
        Phi[(k - 1) * n : k * n] = powers[k]
        acc = np.zeros(n)
        for i in range(k):
            acc = acc + powers[i] @ model.offset
            Gamma[(k - 1) * n : k * n, (k - 1 - i) * m : (k - i) * m] = powers[i] @ model.B_d
        c[(k - 1) * n : k * n] = acc
    return Phi, Gamma, c


def build_ocp(
    ego: EgoState,
    u_prev: EgoInput,
    model,
    ref: ReferenceTrajectory,
    constraints: list,
    cfg: LowLevelConfig,
    params: EgoParams,
) -> qpmod.QuadraticProgram:
    """Condensed QP over the input sequence (u_0..u_{N-1})."""
    N = cfg.N
    n, m = 4, 2
    x0 = ego.as_array()
    Phi, Gamma, c = condense_dynamics(model, x0, N)
    xbar = Phi @ x0 + c  # free response, stacked xi_1..xi_N

    # state weights: Q on xi_1..xi_{N-1}, P on xi_N
    Wx = np.zeros((N * n, N * n))
    for k in range(1, N):
        Wx[(k - 1) * n : k * n, (k - 1) * n : k * n] = cfg.Q
    Wx[(N - 1) * n :, (N - 1) * n :] = cfg.P

    x_ref = np.zeros(N * n)
    for k in range(1, N + 1):
        x_ref[(k - 1) * n : k * n] = [ref.s_ref[k], 0.0, 0.0, ref.v_ref[k]]

    # input difference operator: (DU)_k = u_k - u_{k-1}, u_{-1} external
    D = np.eye(N * m)
    for k in range(1, N):
        D[k * m : (k + 1) * m, (k - 1) * m : k * m] = -np.eye(m)
    d0 = np.zeros(N * m)
    d0[:m] = -u_prev.as_array()

    WR = np.kron(np.eye(N), cfg.R)
    WS = np.kron(np.eye(N), cfg.S)

    H = Gamma.T @ Wx @ Gamma + WR + D.T @ WS @ D
    g = Gamma.T @ Wx @ (xbar - x_ref) + D.T @ WS @ d0
    H = 0.5 * (H + H.T)

    rows = []
    rhs = []
    soft = []

    def state_row(k, state_idx, sign, bound):
        r = np.zeros(N * m)
        r[:] = sign * Gamma[(k - 1) * n + state_idx]
        rows.append(r)
        rhs.append(bound - sign * xbar[(k - 1) * n + state_idx])

    d_max = params.w_lane / 2 - params.w_veh / 2
    for k in range(1, N + 1):
        state_row(k, 1, +1.0, d_max)
        state_row(k, 1, -1.0, d_max)
        state_row(k, 3, +1.0, params.v_max)
        state_row(k, 3, -1.0, 0.0)

    # input bounds
    for k in range(N):
        for j in range(m):
            r = np.zeros(N * m)
            r[k * m + j] = 1.0
            rows.append(r.copy())
            rhs.append(params.u_max[j])
            r2 = np.zeros(N * m)
            r2[k * m + j] = -1.0
            rows.append(r2)
            rhs.append(-params.u_min[j])

    # rate bounds on D U (with u_{-1} offset on the first block)
    for k in range(N):
        for j in range(m):
            r = D[k * m + j].copy()
            off = d0[k * m + j]
            rows.append(r)
            rhs.append(params.du_max[j] - off)
            rows.append(-r)
            rhs.append(-(params.du_min[j] - off))

    # positional safety constraints (soft)
    for con in constraints:
        for k in range(1, N + 1):
            r = con.q_s[k - 1] * Gamma[(k - 1) * n + 0] + con.q_d[k - 1] * Gamma[(k - 1) * n + 1]
            b = -con.q_t[k - 1] - con.q_s[k - 1] * xbar[(k - 1) * n + 0] - con.q_d[k - 1] * xbar[(k - 1) * n + 1]
            if con.soft:
                soft.append(len(rows))
            rows.append(r)
            rhs.append(b)

    return qpmod.QuadraticProgram(
        H=H,
        g=g,
        A_ineq=np.array(rows),
        b_ineq=np.array(rhs),
        soft_rows=np.array(soft, dtype=int) if soft else None,
        rho_slack=cfg.rho_slack,
        slack_lin=cfg.slack_lin,
    )


def control_step(
    ego: EgoState,
    u_prev: EgoInput,
    agents: list,
    path: ReferencePath,
    ref: ReferenceTrajectory,
    cfg: LowLevelConfig,
    params: EgoParams,
    dump_fh=None,
):
    """One receding-horizon step; returns (input, diagnostics)."""
    kappa = path.curvature_at(min(ego.s, path.total_length))
    model = linear_prediction_model(ego, kappa, params, cfg.T)
    constraints = generate_constraints(ego, agents, path, cfg, params)
    problem = build_ocp(ego, u_prev, model, ref, constraints, cfg, params)
    if dump_fh is not None:
        qpmod.dump_qp(problem, dump_fh)
    sol = qpmod.solve(problem)

    diagnostics = {
        "status": sol.status,
        "iterations": sol.iterations,
        "constraints": [
            {"agent": c.agent, "kind": c.provenance} for c in constraints
        ],
        "max_slack": float(np.max(sol.slacks)) if sol.slacks is not None and len(sol.slacks) else 0.0,
        "objective": sol.objective,
        "kkt": float(max(abs(v) for v in sol.residuals.values())) if sol.residuals else 0.0,
    }

    if sol.status != qpmod.STATUS_OPTIMAL:
        # safe fallback: full braking, zero steering
        diagnostics["fallback"] = True
        u = EgoInput(params.u_min[0], 0.0)
        return params.saturate(u), diagnostics

    diagnostics["fallback"] = False
    u = params.saturate(EgoInput(float(sol.z[0]), float(sol.z[1])))
    N, n = cfg.N, 4
    Phi, Gamma, c = condense_dynamics(model, ego.as_array(), N)
    pred = (Phi @ ego.as_array() + c + Gamma @ sol.z[: 2 * N]).reshape(N, n)
    diagnostics["predicted_trajectory"] = pred
    return u, diagnostics
