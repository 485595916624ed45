"""Closed-loop simulation: scenario loading, episode rollout, scoring.

A scenario is a YAML file describing the road, the ego start, and the
other traffic participants.  An episode rolls the full two-layer
controller against the stochastic agent models and records one JSON
line per step, followed by a summary footer, so runs are byte-for-byte
reproducible for a given seed.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .agent_models import AgentState, PedConfig, TVConfig, agent_sim_step
from .ego_dynamics import EgoInput, EgoParams, EgoState, plant_step
from .maneuver_planner import (
    HighLevelConfig,
    enumerate_and_solve,
    project_agents_high_level,
    reference_for_low_level,
)
from .path_geometry import (
    CurvilinearPose,
    LineSegment,
    NoProjectionError,
    ReferencePath,
    make_left_turn_bezier,
)
from .trajectory_planner import AgentObs, LowLevelConfig, ReferenceTrajectory, control_step


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario description."""


@dataclass
class Scenario:
    name: str
    description: str
    seed: int
    n_steps: int
    path: ReferencePath
    ego0: EgoState
    agents: list
    params: EgoParams
    ll: LowLevelConfig
    hl: HighLevelConfig

    @property
    def k_bar(self) -> int:
        return max(1, int(round(self.hl.T_H / self.ll.T)))


def _build_path(spec: dict) -> ReferencePath:
    segments = []
    turn_bounds = None
    cursor = 0.0
    for seg in spec.get("segments", []):
        kind = seg.get("type")
        if kind == "line":
            s = LineSegment(start=np.asarray(seg["start"], dtype=float),
                            heading=float(seg["heading"]), length=float(seg["length"]))
        elif kind == "turn":
            s = make_left_turn_bezier(
                np.asarray(seg["entry"], dtype=float), float(seg["entry_heading"]),
                np.asarray(seg["exit"], dtype=float), float(seg["exit_heading"]),
            )
            if turn_bounds is None:
                turn_bounds = (cursor, cursor + s.length)
        else:
            raise ScenarioError(f"unknown segment type {kind!r}")
        segments.append(s)
        cursor += s.length
    if not segments:
        raise ScenarioError("path needs at least one segment")
    inter = spec.get("intersection", "auto")
    if inter == "auto":
        if turn_bounds is None:
            raise ScenarioError("intersection: auto requires a turn segment")
        entry_s, exit_s = turn_bounds
    elif isinstance(inter, dict) and "box_center" in inter:
        # conflict area given as a square; find where the path runs inside
        cx, cy = (float(v) for v in inter["box_center"])
        half = float(inter.get("box_half", 4.5))
        total = sum(seg.length for seg in segments)
        cursor2 = 0.0
        inside = []
        probe = np.arange(0.0, total, 0.25)
        pts = []
        for seg in segments:
            local = probe[(probe >= cursor2) & (probe < cursor2 + seg.length)] - cursor2
            pts.extend(seg.point(u) for u in local)
            cursor2 += seg.length
        pts = np.array(pts)
        mask = (np.abs(pts[:, 0] - cx) <= half) & (np.abs(pts[:, 1] - cy) <= half)
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            raise ScenarioError("path never enters the intersection box")
        entry_s, exit_s = float(probe[idx[0]]), float(probe[idx[-1]])
    else:
        entry_s, exit_s = float(inter["entry_s"]), float(inter["exit_s"])
    try:
        return ReferencePath(segments, intersection_entry_s=entry_s,
                             intersection_exit_s=exit_s)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def _build_agent(spec: dict) -> AgentObs:
    try:
        name = spec["name"]
        kind = spec["kind"]
        state = AgentState(*[float(x) for x in spec["state"]])
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"bad agent entry: {exc}") from exc
    if kind == "tv":
        cfg = TVConfig(
            heading=float(spec["heading"]),
            ref_point=np.asarray(spec["ref_point"], dtype=float),
            ref_speed=float(spec["ref_speed"]),
            K=np.asarray(spec["K"], dtype=float),
            sigma_w=np.asarray(spec["sigma_w"], dtype=float),
        )
    elif kind == "pedestrian":
        cfg = PedConfig(
            sigma_w=np.asarray(spec["sigma_w"], dtype=float),
            frame_heading=float(spec.get("frame_heading", 0.0)),
        )
    else:
        raise ScenarioError(f"unknown agent kind {kind!r}")
    return AgentObs(name=name, cfg=cfg, state=state)


def _config_from(cls, overrides: dict):
    known = set(cls.__dataclass_fields__)
    bad = set(overrides) - known
    if bad:
        raise ScenarioError(f"unknown {cls.__name__} keys: {sorted(bad)}")
    return cls(**{k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
                  for k, v in overrides.items()})


def load_scenario(source) -> Scenario:
    """Load a scenario from a file path or a name shipped with the package."""
    if isinstance(source, (str, Path)) and not str(source).endswith((".yaml", ".yml")):
        ref = importlib.resources.files("urbansmpc") / "scenarios" / f"{source}.yaml"
        if not ref.is_file():
            raise ScenarioError(f"no bundled scenario named {source!r}")
        raw = yaml.safe_load(ref.read_text())
    else:
        p = Path(source)
        if not p.exists():
            raise ScenarioError(f"scenario file not found: {p}")
        raw = yaml.safe_load(p.read_text())
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must contain a mapping")
    try:
        path = _build_path(raw["path"])
        ego_raw = raw["ego"]
        ego0 = EgoState(float(ego_raw["s"]), float(ego_raw.get("d", 0.0)),
                        float(ego_raw.get("phi", 0.0)), float(ego_raw["v"]))
        agents = [_build_agent(a) for a in raw.get("agents", [])]
    except KeyError as exc:
        raise ScenarioError(f"missing scenario key: {exc}") from exc
    params = _config_from(EgoParams, {
        k: (tuple(v) if isinstance(v, list) else v)
        for k, v in raw.get("vehicle", {}).items()
    })
    ll = _config_from(LowLevelConfig, raw.get("low_level", {}))
    hl = _config_from(HighLevelConfig, raw.get("high_level", {}))
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ScenarioError("duplicate agent names")
    if not (0.0 <= ego0.s <= path.total_length):
        raise ScenarioError("ego start lies outside the path")
    return Scenario(
        name=str(raw.get("name", "unnamed")),
        description=str(raw.get("description", "")),
        seed=int(raw.get("seed", 0)),
        n_steps=int(raw.get("n_steps", 150)),
        path=path, ego0=ego0, agents=agents, params=params, ll=ll, hl=hl,
    )


def bundled_scenarios() -> list:
    root = importlib.resources.files("urbansmpc") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


# ---------------------------------------------------------------------------
# noise


class NoiseStream:
    """Counter-based per-agent Gaussian stream (Philox + Box-Muller)."""

    def __init__(self, seed: int, index: int, sigma: np.ndarray):
        key = np.array([seed, index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        sigma = np.asarray(sigma, dtype=float)
        w, V = np.linalg.eigh(0.5 * (sigma + sigma.T))
        self._L = V @ np.diag(np.sqrt(np.maximum(w, 0.0)))

    def draw(self) -> np.ndarray:
        u1 = 1.0 - self._gen.random()
        u2 = self._gen.random()
        r = math.sqrt(-2.0 * math.log(u1))
        z = np.array([r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)])
        return self._L @ z


# ---------------------------------------------------------------------------
# collision checking


def _rect_corners(center, heading, length, width):
    c, s = np.cos(heading), np.sin(heading)
    R = np.array([[c, -s], [s, c]])
    half = np.array([
        [length / 2, width / 2], [length / 2, -width / 2],
        [-length / 2, -width / 2], [-length / 2, width / 2],
    ])
    return np.asarray(center) + half @ R.T


def rects_collide(c1, h1, dims1, c2, h2, dims2) -> bool:
    """Separating-axis test for two oriented rectangles."""
    p1 = _rect_corners(c1, h1, *dims1)
    p2 = _rect_corners(c2, h2, *dims2)
    for heading in (h1, h2):
        c, s = np.cos(heading), np.sin(heading)
        for axis in (np.array([c, s]), np.array([-s, c])):
            a1 = p1 @ axis
            a2 = p2 @ axis
            if a1.max() < a2.min() or a2.max() < a1.min():
                return False
    return True


def _agent_heading(obs: AgentObs) -> float:
    if isinstance(obs.cfg, TVConfig):
        return obs.cfg.heading
    return obs.cfg.frame_heading


def _agent_dims(obs: AgentObs):
    return (obs.cfg.length, obs.cfg.width)


# ---------------------------------------------------------------------------
# episode rollout


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    hl_enabled: bool
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def write(self, fh):
        header = {"scenario": self.scenario, "seed": self.seed, "hl": self.hl_enabled}
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for rec in self.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": self.summary}, sort_keys=True) + "\n")

    @staticmethod
    def read(fh) -> "EpisodeLog":
        header = None
        records = []
        summary = None
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if "header" in obj:
                header = obj["header"]
            elif "summary" in obj:
                summary = obj["summary"]
            else:
                records.append(obj)
        if header is None:
            raise ValueError("log has no header line")
        if summary is None:
            raise ValueError("log has no summary line (truncated episode?)")
        return EpisodeLog(scenario=header["scenario"], seed=header["seed"],
                          hl_enabled=header["hl"], records=records, summary=summary)


def _round(x, nd=9):
    return round(float(x), nd)


def run_episode(
    scn: Scenario,
    hl_enabled: bool = True,
    seed: int | None = None,
    n_steps: int | None = None,
    noise: bool = True,
    dump_qp_fh=None,
) -> EpisodeLog:
    """Roll one closed-loop episode and score it.

    ``noise=False`` zeroes the agent disturbances (mean-behavior run),
    which is what headline cost comparisons use.
    """
    seed = scn.seed if seed is None else seed
    n_steps = scn.n_steps if n_steps is None else n_steps
    T = scn.ll.T
    params = scn.params

    ego = scn.ego0
    agents = list(scn.agents)
    streams = [NoiseStream(seed, i, obs.cfg.sigma_w) for i, obs in enumerate(agents)]
    u_prev = EgoInput(0.0, 0.0)
    plan = None
    plan_step = 0

    log = EpisodeLog(scenario=scn.name, seed=seed, hl_enabled=hl_enabled)
    collision_step = None
    min_gaps = {obs.name: float("inf") for obs in agents}
    # Minimum along-path clearance to each agent while it is ahead of the
    # ego and inside the road band; this is the distance the stop standoff
    # actually regulates, unlike the raw Euclidean gap.
    min_ahead_gaps = {obs.name: float("inf") for obs in agents}
    band = 1.5 * params.w_lane
    J = 0.0

    for tau in range(n_steps):
        if hl_enabled and tau % scn.k_bar == 0:
            specs = project_agents_high_level(ego, agents, scn.path, scn.hl, T, params)
            plan = enumerate_and_solve(ego, specs, scn.path, scn.hl, params)
            plan_step = tau
        if plan is not None:
            ref = reference_for_low_level(plan, (tau - plan_step) * T, ego.s,
                                          scn.ll.N, T, scn.hl)
        else:
            ref = ReferenceTrajectory.cruise(scn.hl.v_ref, ego.s, scn.ll.N, T)

        u, diag = control_step(ego, u_prev, agents, scn.path, ref, scn.ll, params,
                               dump_fh=dump_qp_fh if tau == 0 else None)

        ego_xy = scn.path.curvilinear_to_world(CurvilinearPose(ego.s, ego.d, 0.0))
        record = {
            "t": _round(tau * T),
            "ego": {"s": _round(ego.s), "d": _round(ego.d), "phi": _round(ego.phi),
                    "v": _round(ego.v), "x": _round(ego_xy[0]), "y": _round(ego_xy[1])},
            "u": {"a": _round(u.a), "delta": _round(u.delta)},
            "v_ref": _round(ref.v_ref[0]),
            "ref_source": ref.source,
            "agents": [
                {"name": obs.name, "x": _round(obs.state.x), "y": _round(obs.state.y),
                 "vx": _round(obs.state.vx), "vy": _round(obs.state.vy)}
                for obs in agents
            ],
            "solver": {"status": diag["status"], "fallback": diag["fallback"],
                       "iterations": diag["iterations"],
                       "max_slack": _round(diag["max_slack"]),
                       "kkt": _round(diag["kkt"], 12)},
            "n_constraints": len(diag["constraints"]),
        }
        if hl_enabled and plan is not None:
            record["hl"] = {"age": _round((tau - plan_step) * T),
                            "degraded": plan.degraded,
                            "pattern": dict(plan.pattern)}
        log.records.append(record)

        # advance the world
        ego_next = plant_step(ego, u, scn.path, T, params)
        agents = [
            AgentObs(obs.name, obs.cfg, agent_sim_step(
                obs.state, obs.cfg,
                streams[i].draw() if noise else np.zeros(2), T))
            for i, obs in enumerate(agents)
        ]

        # stage cost on the resulting state (tracking the cruise speed)
        dxi = np.array([0.0, ego_next.d, ego_next.phi, ego_next.v - scn.hl.v_ref])
        du = u.as_array() - u_prev.as_array()
        J += dxi @ scn.ll.Q @ dxi + u.as_array() @ scn.ll.R @ u.as_array() + du @ scn.ll.S @ du

        ego = ego_next
        u_prev = u

        # collision / gap bookkeeping on the new world state
        ego_xy = scn.path.curvilinear_to_world(CurvilinearPose(ego.s, ego.d, 0.0))
        ego_heading = scn.path.heading_at(min(ego.s, scn.path.total_length)) + ego.phi
        for obs in agents:
            gap = float(np.linalg.norm(obs.state.position - ego_xy))
            min_gaps[obs.name] = min(min_gaps[obs.name], gap)
            try:
                pose = scn.path.world_to_curvilinear(obs.state.position)
            except NoProjectionError:
                pose = None
            if pose is not None and pose.s >= ego.s and abs(pose.d) <= band:
                min_ahead_gaps[obs.name] = min(min_ahead_gaps[obs.name],
                                               pose.s - ego.s)
            if collision_step is None and rects_collide(
                ego_xy, ego_heading, (params.l_veh, params.w_veh),
                obs.state.position, _agent_heading(obs), _agent_dims(obs),
            ):
                collision_step = tau + 1
        if collision_step is not None:
            break

    # terminal record: the state the last input produced
    ego_xy = scn.path.curvilinear_to_world(CurvilinearPose(ego.s, ego.d, 0.0))
    log.records.append({
        "t": _round(len(log.records) * T),
        "ego": {"s": _round(ego.s), "d": _round(ego.d), "phi": _round(ego.phi),
                "v": _round(ego.v), "x": _round(ego_xy[0]), "y": _round(ego_xy[1])},
        "agents": [
            {"name": obs.name, "x": _round(obs.state.x), "y": _round(obs.state.y),
             "vx": _round(obs.state.vx), "vy": _round(obs.state.vy)}
            for obs in agents
        ],
    })

    speeds = [rec["ego"]["v"] for rec in log.records]
    log.summary = {
        "J_sim": _round(J, 6),
        "collision": collision_step is not None,
        "collision_step": collision_step,
        "steps": len(log.records) - 1,
        "min_gaps": {k: (_round(v, 6) if np.isfinite(v) else None)
                     for k, v in min_gaps.items()},
        "min_ahead_gaps": {k: (_round(v, 6) if np.isfinite(v) else None)
                           for k, v in min_ahead_gaps.items()},
        "min_speed": _round(min(speeds), 6),
        "final_s": _round(ego.s, 6),
        "fallback_steps": sum(1 for r in log.records
                              if r.get("solver", {}).get("fallback")),
    }
    return log


def sweep(
    scn: Scenario,
    seeds,
    hl_enabled: bool = True,
    beta_tv: float | None = None,
    beta_ped: float | None = None,
    n_steps: int | None = None,
) -> dict:
    """Monte-Carlo sweep over seeds; optional risk-parameter overrides."""
    ll = scn.ll
    if beta_tv is not None or beta_ped is not None:
        ll = LowLevelConfig(**{
            **{k: getattr(scn.ll, k) for k in LowLevelConfig.__dataclass_fields__},
            **({"beta_tv": beta_tv} if beta_tv is not None else {}),
            **({"beta_ped": beta_ped} if beta_ped is not None else {}),
        })
    scn = Scenario(**{**scn.__dict__, "ll": ll})
    runs = []
    for seed in seeds:
        log = run_episode(scn, hl_enabled=hl_enabled, seed=int(seed), n_steps=n_steps)
        runs.append({"seed": int(seed), **log.summary})
    n = len(runs)
    gaps = [min(g for g in r["min_gaps"].values() if g is not None)
            for r in runs if any(g is not None for g in r["min_gaps"].values())]
    ahead = [min(g for g in r["min_ahead_gaps"].values() if g is not None)
             for r in runs
             if any(g is not None for g in r["min_ahead_gaps"].values())]
    return {
        "n_runs": n,
        "collision_rate": sum(r["collision"] for r in runs) / n if n else 0.0,
        "mean_J": float(np.mean([r["J_sim"] for r in runs])) if n else 0.0,
        "min_gap": float(min(gaps)) if gaps else None,
        "mean_min_gap": float(np.mean(gaps)) if gaps else None,
        "mean_min_ahead_gap": float(np.mean(ahead)) if ahead else None,
        "mean_min_speed": float(np.mean([r["min_speed"] for r in runs])) if n else 0.0,
        "runs": runs,
    }
