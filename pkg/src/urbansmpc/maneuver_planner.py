"""High-level maneuver planner: long-horizon speed profile selection.

Runs on a slow clock with a position-only point-mass abstraction of the
ego vehicle.  Crossing agents make the feasible set nonconvex (pass
before or after); the planner enumerates the pass-order patterns, solves
one convex QP per pattern, and keeps the cheapest feasible plan.  The
chosen piecewise-constant speed profile is handed to the low-level
planner as its velocity reference.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import qp as qpmod
from .agent_models import PedConfig, TVConfig, point_mass_matrices, predict_mean
from .ego_dynamics import EgoParams, EgoState
from .path_geometry import NoProjectionError, ReferencePath
from .trajectory_planner import (
    AgentObs,
    ReferenceTrajectory,
    _is_same_lane_tv,
    tv_conflict_window,
)
from .uncertainty import propagate_covariance, risk_inflation, stopping_distance

K_HL_DEFAULT = np.array([[0.0, -0.34, 0.0, 0.0], [0.0, 0.0, -0.21, -0.67]])

_BIG = 1e6  # disables one side of a disjunction row


@dataclass
class HighLevelConfig:
    N_H: int = 8
    T_H: float = 2.0
    r_H: float = 0.5
    v_ref: float = 10.0
    beta_tv: float = 0.4
    beta_ped: float = 0.5
    eps_safe_tv: float = 4.0
    eps_safe_ped: float = 1.0
    K_H: np.ndarray = field(default_factory=lambda: K_HL_DEFAULT.copy())
    a_lat_max: float = 7.0       # lateral-acceleration cap defining curve speed
    limit_lookahead: float = 26.0  # m of path scanned ahead (one step at v_max)
    decel_comfort: float = 3.0   # braking rate assumed when sizing stop margins
    ped_clear_margin: float = 0.0  # extra walk distance before a crossing is over
    deadline_lead: float = 0.5   # plan to clear a conflict this early (s)
    rho_slack: float = 1e4
    slack_lin: float = 1e2

    def __post_init__(self):
        self.K_H = np.asarray(self.K_H, dtype=float)
        if self.N_H < 1 or self.T_H <= 0:
            raise ValueError("bad horizon")


@dataclass
class CrossingConstraintSpec:
    """Longitudinal keep-out corridor for one agent on the slow clock.

    ``s_agent[h]`` is the agent's position mapped onto the ego path (its
    own progress measured through the conflict point).  ``kind`` is
    ``in_front`` (convex: stay behind), ``crossing`` (pass before or
    after: disjunctive) or ``window`` (hold at a stop line or clear the
    conflict interval before the agent arrives).  ``allowed``
    restricts the switch steps the enumeration may pick for this agent.
    """

    agent: str
    kind: str
    s_agent: np.ndarray  # (N_H+1,)
    delta1: np.ndarray   # margin when staying behind
    delta2: np.ndarray   # margin when passing ahead
    allowed: tuple = None
    deadline: tuple = None  # (t_arrive, clear_line) for window specs


@dataclass
class ManeuverPlan:
    nu: np.ndarray        # (N_H,) piecewise-constant speeds
    s: np.ndarray         # (N_H+1,) resulting positions
    objective: float
    pattern: dict         # crossing agent -> chosen switch step
    degraded: bool
    v0: float


def _hl_sigma(sigma_w: np.ndarray, k_bar: int) -> np.ndarray:
    """Process noise averaged over one slow step."""
    return np.asarray(sigma_w, dtype=float) / k_bar


def _find_crossing(path: ReferencePath, p0: np.ndarray, direction: np.ndarray):
    """First transversal crossing of the agent's travel line with the path.

    Returns (s_cross, p_cross) or None.  The signed perpendicular
    distance of path points to the line changes sign at a crossing.
    """
    ss = np.linspace(0.0, path.total_length, int(path.total_length) + 1)
    pts = np.array([path.point_at(s) for s in ss])
    rel = pts - p0
    signed = direction[0] * rel[:, 1] - direction[1] * rel[:, 0]
    sign_change = np.nonzero(np.diff(np.sign(signed)) != 0)[0]
    if len(sign_change) == 0:
        return None
    i = sign_change[0]
    lo, hi = ss[i], ss[i + 1]
    f = lambda s: (lambda p: direction[0] * (p[1] - p0[1]) - direction[1] * (p[0] - p0[0]))(
        path.point_at(s)
    )
    flo = f(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    s_cross = 0.5 * (lo + hi)
    return s_cross, path.point_at(s_cross)


def _hl_envelope(cov, beta: float, eps_safe: float, axis_angle: float) -> np.ndarray:
    return cov.sigma_longitudinal(axis_angle) * np.sqrt(risk_inflation(beta))


def project_agents_high_level(
    ego: EgoState,
    agents: list,
    path: ReferencePath,
    cfg: HighLevelConfig,
    ll_T: float,
    params: EgoParams,
) -> list:
    """Classify agents and build slow-clock constraint specs."""
    k_bar = max(1, int(round(cfg.T_H / ll_T)))
    A_H, B_H = point_mass_matrices(cfg.T_H)
    specs = []
    decel = cfg.decel_comfort

    for obs in agents:
        is_tv = isinstance(obs.cfg, TVConfig)
        beta = cfg.beta_tv if is_tv else cfg.beta_ped
        eps = cfg.eps_safe_tv if is_tv else cfg.eps_safe_ped
        half_agent = obs.cfg.length / 2.0

        if is_tv:
            cfg_h = dataclasses.replace(obs.cfg, K=cfg.K_H)
            pose = _is_same_lane_tv(obs, path, params)
            if pose is not None and pose.s > ego.s:
                traj = predict_mean(obs.state, cfg_h, cfg.N_H, cfg.T_H)
                s_agent = np.empty(cfg.N_H + 1)
                prev = pose.s
                for h, row in enumerate(traj):
                    try:
                        prev = path.world_to_curvilinear(row[[0, 2]]).s
                    except NoProjectionError:
                        pass
                    s_agent[h] = prev
                cov = propagate_covariance(
                    A_H, B_H, cfg.K_H, _hl_sigma(obs.cfg.sigma_w, k_bar), cfg.N_H
                )
                e_h = _hl_envelope(cov, beta, eps, 0.0)
                speeds = np.linalg.norm(traj[:, [1, 3]], axis=1)
                ds = stopping_distance(ego.v, speeds, decel)
                delta1 = params.l_veh / 2.0 + half_agent + ds + e_h + eps
                specs.append(
                    CrossingConstraintSpec(obs.name, "in_front", s_agent, delta1, delta1)
                )
                continue

        if is_tv:
            # crossing traffic: hold at the stop line until the TV has left
            # the conflict interval, or be clear of it before the TV arrives
            window = tv_conflict_window(
                obs, path, params, beta, eps, cfg.N_H * cfg.T_H, ll_T
            )
            if window is None:
                continue
            s_lo, s_hi, t_in, t_out = window
            if ego.s >= s_hi + params.l_veh / 2.0:
                continue  # already through
            hold = min(path.intersection_entry_s, s_lo) - params.l_veh / 2.0
            # committed: past the stop line, or physically unable to stop at
            # it -- clearing the conflict is the only option and the fast
            # layer polices the details
            if ego.s >= hold or ego.v**2 / (2.0 * abs(params.u_min[0])) > hold - ego.s:
                continue
            clear_line = s_hi + params.l_veh / 2.0 + 0.5
            t_grid = cfg.T_H * np.arange(cfg.N_H + 1)
            # the hold bound absorbs the comfort stopping distance so the
            # plan can always still brake to the line
            hold_bound = hold - stopping_distance(ego.v, 0.0, decel)
            behind = np.where(t_grid <= t_out + 1e-9, hold_bound, _BIG)
            t_dl = t_in - cfg.deadline_lead
            allowed = (1, cfg.N_H + 1) if t_dl > 1e-9 else (cfg.N_H + 1,)
            specs.append(
                CrossingConstraintSpec(
                    obs.name, "window", behind, np.zeros(cfg.N_H + 1),
                    np.zeros(cfg.N_H + 1), allowed, (t_dl, clear_line),
                )
            )
            continue

        speed = float(np.linalg.norm(obs.state.velocity))
        if speed < 1e-6:
            continue
        direction = obs.state.velocity / speed
        hit = _find_crossing(path, obs.state.position, direction)
        if hit is None:
            continue
        s_cross, p_cross = hit
        if s_cross <= ego.s:
            continue
        progress0 = float((obs.state.position - p_cross) @ direction)
        # a pedestrian blocks until it is across the whole street plus a
        # comfort margin past the far kerb
        clear = 1.5 * params.w_lane + half_agent + cfg.ped_clear_margin
        if progress0 > clear:
            continue  # already through the conflict

        traj = predict_mean(obs.state, obs.cfg, cfg.N_H, cfg.T_H)
        cov = propagate_covariance(
            A_H, B_H, None, _hl_sigma(obs.cfg.sigma_w, k_bar), cfg.N_H
        )
        dir_angle = float(np.arctan2(direction[1], direction[0]))
        axis = dir_angle - obs.cfg.frame_heading

        progress = (traj[:, [0, 2]] - p_cross) @ direction
        s_agent = s_cross + progress
        e_h = _hl_envelope(cov, beta, eps, axis)
        delta2 = params.l_veh / 2.0 + half_agent + e_h + eps + np.zeros(cfg.N_H + 1)
        # staying behind must remain feasible under full braking, so the
        # behind-side margin absorbs the ego stopping distance
        v_along = np.maximum(traj[:, [1, 3]] @ direction, 0.0)
        delta1 = delta2 + stopping_distance(ego.v, v_along, decel)
        # the fast layer only releases a pedestrian once it has left the
        # street, so passing ahead is not available before that step
        delta2 = np.where(progress > clear, delta2, _BIG)
        specs.append(CrossingConstraintSpec(obs.name, "crossing", s_agent, delta1, delta2))
    return specs


def speed_limits(path: ReferencePath, s: np.ndarray, cfg: HighLevelConfig, params: EgoParams) -> np.ndarray:
    """Per-step upper speed bound from the path curvature just ahead."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, path.total_length)
    out = np.empty_like(s)
    for i, si in enumerate(s):
        window = np.arange(si, min(si + cfg.limit_lookahead, path.total_length) + 1e-9, 1.0)
        kappa = max(abs(path.curvature_at(min(w, path.total_length))) for w in window)
        if kappa < 1e-6:
            out[i] = params.v_max
        else:
            out[i] = min(params.v_max, np.sqrt(cfg.a_lat_max / kappa))
    return out


def _pattern_qp(ego, specs, limits, cfg, pattern):
    """Assemble the QP for one pass-order pattern; hard rows only."""
    n = cfg.N_H
    D = np.eye(n)
    for h in range(1, n):
        D[h, h - 1] = -1.0
    d0 = np.zeros(n)
    d0[0] = -ego.v
    H = D.T @ D + cfg.r_H * np.eye(n)
    g = D.T @ d0 - cfg.r_H * cfg.v_ref * np.ones(n)
    H = 0.5 * (H + H.T)

    L = np.tril(np.ones((n, n)))  # s_h - s0 = T_H * (L nu)_h
    rows = [np.eye(n), -np.eye(n)]
    rhs = [limits, np.zeros(n)]
    crossing_rows = []
    for spec in specs:
        h_star = pattern.get(spec.agent, 0)
        if spec.kind == "window" and h_star <= n:
            # pass branch: one row requiring the ego to be clear of the
            # conflict interval at the agent's (interpolated) arrival time
            t_dl, bound = spec.deadline
            h0 = min(int(t_dl // cfg.T_H), n - 1)
            coeff = np.zeros(n)
            coeff[:h0] = cfg.T_H
            coeff[h0] = t_dl - h0 * cfg.T_H
            rows.append(-coeff[None, :])
            rhs.append(np.array([-(bound - ego.s)]))
            crossing_rows.append(2 * n + len(crossing_rows))
            continue
        for h in range(1, n + 1):
            row = cfg.T_H * L[h - 1]
            if spec.kind == "in_front" or h < h_star:
                rows.append(row[None, :])
                rhs.append(np.array([spec.s_agent[h] - spec.delta1[h] - ego.s]))
            else:
                rows.append(-row[None, :])
                rhs.append(np.array([-(spec.s_agent[h] + spec.delta2[h] - ego.s)]))
            crossing_rows.append(2 * n + len(crossing_rows))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    return H, g, A, b, np.array(crossing_rows, dtype=int)


def _solve_pattern(ego, specs, limits, cfg, pattern, soften):
    H, g, A, b, agent_rows = _pattern_qp(ego, specs, limits, cfg, pattern)
    problem = qpmod.QuadraticProgram(
        H=H,
        g=g,
        A_ineq=A,
        b_ineq=b,
        soft_rows=agent_rows if (soften and len(agent_rows)) else None,
        rho_slack=cfg.rho_slack,
        slack_lin=cfg.slack_lin,
    )
    sol = qpmod.solve(problem)
    if sol.status != qpmod.STATUS_OPTIMAL:
        return None
    return sol


def _enumerate(ego, specs, limits, cfg, soften=False):
    """Try every pass-order pattern; return (plan, objective) or None."""
    crossing = [s for s in specs if s.kind != "in_front"]
    # N_H+1 means never pass; window specs restrict the choice further
    choices = [s.allowed if s.allowed is not None else range(cfg.N_H + 2) for s in crossing]
    best = None
    for combo in itertools.product(*choices):
        pattern = {s.agent: h for s, h in zip(crossing, combo)}
        sol = _solve_pattern(ego, specs, limits, cfg, pattern, soften)
        if sol is None:
            continue
        key = (-round(sol.objective, 9), sum(combo), combo)
        if best is None or key > best[0]:
            best = (key, sol, pattern)
    if best is None:
        return None
    _, sol, pattern = best
    nu = sol.z[: cfg.N_H]
    s = ego.s + cfg.T_H * np.concatenate([[0.0], np.cumsum(nu)])
    return ManeuverPlan(
        nu=nu, s=s, objective=sol.objective, pattern=pattern,
        degraded=soften, v0=ego.v,
    )


def enumerate_and_solve(
    ego: EgoState,
    specs: list,
    path: ReferencePath,
    cfg: HighLevelConfig,
    params: EgoParams,
) -> ManeuverPlan:
    """Pick the best maneuver; fixed-point iteration for the speed limits.

    Speed limits depend on position, which depends on the optimized
    speeds; they are evaluated at the previous iterate's positions and
    refined until the plan stops moving (a handful of passes suffices).
    If no pattern is feasible the safety rows are softened (degraded
    mode) -- the low level remains responsible for hard safety.
    """
    s_guess = ego.s + cfg.T_H * ego.v * np.arange(cfg.N_H)
    limits = speed_limits(path, s_guess, cfg, params)
    plan = _enumerate(ego, specs, limits, cfg)
    if plan is not None:
        for _ in range(8):
            limits = speed_limits(path, plan.s[:-1], cfg, params)
            refined = _enumerate(ego, specs, limits, cfg)
            if refined is None:
                break
            moved = np.max(np.abs(refined.nu - plan.nu))
            plan = refined
            if moved < 1e-9:
                break
        return plan
    plan = _enumerate(ego, specs, limits, cfg, soften=True)
    if plan is None:
        raise RuntimeError("degraded high-level problem unexpectedly infeasible")
    return plan


def reference_for_low_level(
    plan: ManeuverPlan,
    age: float,
    ego_s: float,
    N: int,
    T: float,
    cfg: HighLevelConfig,
) -> ReferenceTrajectory:
    """Sample the piecewise-constant plan on the fast clock."""
    idx = np.floor((age + T * np.arange(N + 1)) / cfg.T_H).astype(int)
    idx = np.clip(idx, 0, cfg.N_H - 1)
    v_ref = plan.nu[idx]
    s_ref = ego_s + np.concatenate([[0.0], np.cumsum(v_ref[:-1] * T)])
    return ReferenceTrajectory(v_ref=v_ref, s_ref=s_ref, source="high_level")


def gain_consistency(K_ll: np.ndarray, K_hl: np.ndarray, T: float, T_H: float) -> float:
    """Max relative mismatch between the slow-clock closed-loop spectrum
    and the fast-clock spectrum raised to the clock ratio."""
    A, B = point_mass_matrices(T)
    A_H, B_H = point_mass_matrices(T_H)
    k_bar = T_H / T
    ev_fast = np.sort_complex(np.linalg.eigvals(A + B @ np.asarray(K_ll, dtype=float)))
    ev_slow = np.sort_complex(np.linalg.eigvals(A_H + B_H @ np.asarray(K_hl, dtype=float)))
    fast_scaled = np.sort_complex(ev_fast**k_bar)
    return float(np.max(np.abs(np.abs(fast_scaled) - np.abs(ev_slow)) / np.maximum(np.abs(ev_slow), 1e-9)))
