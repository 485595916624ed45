"""Prediction-error covariance propagation and safety-distance tightening.

The prediction error of a stochastic agent is propagated through its
(closed-loop) linear dynamics; the longitudinal standard deviation plus a
risk parameter beta turn into a deterministic keep-out distance per
prediction step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RiskParameterError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceTrajectory:
    """Per-step 4x4 prediction-error covariances, index 0 is all zeros."""

    covs: np.ndarray  # (N+1, 4, 4)

    def sigma_longitudinal(self, axis_angle: float = 0.0) -> np.ndarray:
        """Std of the position error along a direction in the covariance frame.

        axis_angle = 0 reads the plain [0][0] (longitudinal) entry.
        """
        sel = np.array([np.cos(axis_angle), 0.0, np.sin(axis_angle), 0.0])
        var = np.einsum("i,kij,j->k", sel, self.covs, sel)
        return np.sqrt(np.maximum(var, 0.0))


@dataclass(frozen=True)
class SafetyEnvelope:
    """Tightened keep-out distance a_k per prediction step for one agent."""

    a: np.ndarray           # (N+1,)
    half_length: float
    ds_stop: np.ndarray     # (N+1,)
    e_s: np.ndarray         # (N+1,)
    eps_safe: float


def propagate_covariance(A: np.ndarray, B: np.ndarray, K, sigma_w: np.ndarray, N: int) -> CovarianceTrajectory:
    """Error-covariance recursion Sigma_{k+1} = B Sw B' + Acl Sigma_k Acl'.

    K=None means no stabilizing feedback (pedestrian): the open-loop A is
    used.  Saturation is ignored, keeping the recursion exact for the
    linear loop.
    """
    sigma_w = np.asarray(sigma_w, dtype=float)
    if np.min(np.linalg.eigvalsh(0.5 * (sigma_w + sigma_w.T))) < -1e-12:
        raise ValueError("noise covariance must be PSD")
    Acl = A if K is None else A + B @ np.asarray(K, dtype=float)
    noise = B @ sigma_w @ B.T
    covs = np.zeros((N + 1, 4, 4))
    for k in range(N):
        covs[k + 1] = noise + Acl @ covs[k] @ Acl.T
    return CovarianceTrajectory(covs=covs)


def risk_inflation(beta: float) -> float:
    """gamma = -2 ln(1 - beta); larger beta means a wider safety margin."""
    if not 0.0 < beta < 1.0:
        raise RiskParameterError(f"risk parameter must be in (0, 1), got {beta}")
    return -2.0 * np.log(1.0 - beta)


def stopping_distance(v_ego: float, v_agent: float, decel: float) -> float:
    """Distance needed to shed the closing speed at max braking, floored at 0."""
    if decel <= 0:
        raise ValueError("braking deceleration must be positive")
    gap = (np.asarray(v_ego, dtype=float) ** 2 - np.asarray(v_agent, dtype=float) ** 2) / (2.0 * decel)
    return np.maximum(0.0, gap)


def safety_envelope(
    cov: CovarianceTrajectory,
    agent_length: float,
    beta: float,
    eps_safe: float,
    ego_v: float,
    agent_v,
    decel: float,
    axis_angle: float = 0.0,
) -> SafetyEnvelope:
    """Assemble a_k = l/2 + ds_stop_k + e_{s,k} + eps_safe.

    `agent_v` may be a scalar or a per-step array of predicted agent
    speeds; the stopping term uses the per-step speed.
    """
    gamma = risk_inflation(beta)
    sigma = cov.sigma_longitudinal(axis_angle)
    e_s = sigma * np.sqrt(gamma)
    agent_v = np.broadcast_to(np.asarray(agent_v, dtype=float), sigma.shape)
    ds = np.array([stopping_distance(ego_v, va, decel) for va in agent_v])
    a = agent_length / 2.0 + ds + e_s + eps_safe
    return SafetyEnvelope(a=a, half_length=agent_length / 2.0, ds_stop=ds, e_s=e_s, eps_safe=eps_safe)


def empirical_containment(
    A: np.ndarray,
    B: np.ndarray,
    K,
    sigma_w: np.ndarray,
    beta: float,
    N: int,
    trials: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fraction of sampled linear rollouts inside the e_{s,k} band, per step.

    Samples the unsaturated closed loop (the same process the covariance
    recursion describes) and checks the longitudinal deviation from the
    noise-free mean against e_{s,k} = sigma_{s,k} sqrt(gamma).
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a meaningful frequency")
    cov = propagate_covariance(A, B, K, sigma_w, N)
    e_s = cov.sigma_longitudinal() * np.sqrt(risk_inflation(beta))
    Acl = A if K is None else A + B @ np.asarray(K, dtype=float)
    L = np.linalg.cholesky(sigma_w + 1e-15 * np.eye(2))
    # Error dynamics only: err_{k+1} = Acl err_k + B w_k, err_0 = 0.
    err = np.zeros((trials, 4))
    contained = np.empty(N + 1)
    contained[0] = 1.0
    for k in range(N):
        w = rng.standard_normal((trials, 2)) @ L.T
        err = err @ Acl.T + w @ B.T
        # Step 0 always contained: zero error by construction.
        contained[k + 1] = np.mean(np.abs(err[:, 0]) <= e_s[k + 1]) if e_s[k + 1] > 0 else 1.0
    return contained
