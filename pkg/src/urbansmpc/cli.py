"""Command-line front end: single episodes, Monte-Carlo sweeps, model checks."""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .agent_models import AgentConfigError, PedConfig, point_mass_matrices
from .maneuver_planner import _hl_sigma
from .sim_harness import ScenarioError, Scenario, load_scenario, run_episode, sweep
from .uncertainty import empirical_containment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_COLLISION = 3

CONTAINMENT_TOL = 0.03


def _add_scenario_arg(parser):
    parser.add_argument("--scenario", required=True,
                        help="bundled scenario name or path to a scenario file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="urbansmpc",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="roll one closed-loop episode")
    _add_scenario_arg(run)
    run.add_argument("--hl", choices=["on", "off"], default="on",
                     help="maneuver planner toggle (default: on)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--steps", type=int, default=None)
    run.add_argument("--no-noise", action="store_true",
                     help="zero the agent disturbances (mean-behavior run)")
    run.add_argument("--out", type=Path, default=None,
                     help="episode log destination (default: stdout)")
    run.add_argument("--dump-qp", type=Path, default=None,
                     help="write the first step's QP matrices to this file")

    swp = sub.add_parser("sweep", help="Monte-Carlo sweep over seeds")
    _add_scenario_arg(swp)
    swp.add_argument("--seeds", type=int, default=20,
                     help="number of seeds, 0..N-1 (default: 20)")
    swp.add_argument("--hl", choices=["on", "off"], default="on")
    swp.add_argument("--steps", type=int, default=None)
    swp.add_argument("--beta-tv", type=float, default=None)
    swp.add_argument("--beta-ped", type=float, default=None)

    val = sub.add_parser("validate",
                         help="load a scenario and check the risk envelopes empirically")
    _add_scenario_arg(val)
    val.add_argument("--trials", type=int, default=10_000)
    val.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    dump_cm = open(args.dump_qp, "w") if args.dump_qp else nullcontext()
    with dump_cm as dump_fh:
        log = run_episode(scn, hl_enabled=args.hl == "on", seed=args.seed,
                          n_steps=args.steps, noise=not args.no_noise,
                          dump_qp_fh=dump_fh)
    out_cm = open(args.out, "w") if args.out else nullcontext(sys.stdout)
    with out_cm as fh:
        log.write(fh)
    return EXIT_COLLISION if log.summary["collision"] else EXIT_OK


def _cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    out = sweep(scn, seeds=range(args.seeds), hl_enabled=args.hl == "on",
                beta_tv=args.beta_tv, beta_ped=args.beta_ped, n_steps=args.steps)
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_COLLISION if out["collision_rate"] > 0 else EXIT_OK


def _containment_checks(scn: Scenario, trials: int, rng) -> list:
    """Empirical containment for every agent at both controller clocks."""
    k_bar = scn.k_bar
    checks = []
    for obs in scn.agents:
        ped = isinstance(obs.cfg, PedConfig)
        K_ll = None if ped else obs.cfg.K
        beta = scn.ll.beta_ped if ped else scn.ll.beta_tv
        beta_h = scn.hl.beta_ped if ped else scn.hl.beta_tv
        clocks = [
            ("low_level", scn.ll.T, scn.ll.N, K_ll, obs.cfg.sigma_w, beta),
            ("high_level", scn.hl.T_H, scn.hl.N_H, None if ped else scn.hl.K_H,
             _hl_sigma(obs.cfg.sigma_w, k_bar), beta_h),
        ]
        for layer, T, N, K, sigma, b in clocks:
            A, B = point_mass_matrices(T)
            freq = empirical_containment(A, B, K, sigma, b, N, trials, rng)
            checks.append({
                "agent": obs.name, "layer": layer, "beta": b,
                "worst_freq": float(freq.min()),
                "ok": bool(freq.min() >= b - CONTAINMENT_TOL),
            })
    return checks


def _cmd_validate(args) -> int:
    scn = load_scenario(args.scenario)
    rng = np.random.default_rng(args.seed)
    checks = _containment_checks(scn, args.trials, rng)
    report = {"scenario": scn.name, "trials": args.trials, "checks": checks,
              "ok": all(c["ok"] for c in checks)}
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK if report["ok"] else EXIT_RUNTIME


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}
    try:
        return handlers[args.command](args)
    except (ScenarioError, AgentConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report, don't traceback, for operators
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
