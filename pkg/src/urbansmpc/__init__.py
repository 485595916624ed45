"""Two-layer stochastic MPC for urban driving: trajectory planner,
maneuver planner, stochastic traffic agents, and a closed-loop simulator."""

__version__ = "0.1.0"
