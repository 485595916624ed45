import numpy as np
import pytest

from urbansmpc.agent_models import (
    AgentConfigError,
    AgentState,
    PedConfig,
    TVConfig,
    agent_sim_step,
    assert_stable_feedback,
    closed_loop_matrix,
    point_mass_matrices,
    predict_mean,
    tv_feedback,
)

K_PAPER = np.array([[0.0, -0.55, 0.0, 0.0], [0.0, 0.0, -0.63, -1.15]])


def make_tv(heading=0.0, ref_point=(0.0, 0.0), ref_speed=8.0):
    return TVConfig(
        heading=heading,
        ref_point=ref_point,
        ref_speed=ref_speed,
        K=K_PAPER,
        sigma_w=np.diag([0.15, 0.03]),
    )


def make_ped():
    return PedConfig(sigma_w=np.diag([0.05, 0.2]))


class TestPointMassMatrices:
    def test_low_level_sampling_time(self):
        A, B = point_mass_matrices(0.2)
        assert A[0, 1] == 0.2
        assert B[0, 0] == pytest.approx(0.02)
        assert B[1, 0] == pytest.approx(0.2)

    def test_high_level_sampling_time(self):
        A, B = point_mass_matrices(2.0)
        assert B[0, 0] == pytest.approx(2.0)
        assert B[1, 0] == pytest.approx(2.0)

    def test_structure(self):
        A, _ = point_mass_matrices(0.7)
        assert np.all(np.diag(A) == 1.0)
        assert np.all(np.tril(A, -1) == 0.0)

    def test_rejects_nonpositive_T(self):
        with pytest.raises(ValueError):
            point_mass_matrices(0.0)


class TestFeedback:
    def test_zero_error(self):
        cfg = make_tv()
        u = tv_feedback(AgentState(x=12.0, vx=8.0, y=0.0, vy=0.0), cfg)
        np.testing.assert_allclose(u, [0.0, 0.0], atol=1e-12)

    def test_longitudinal_gain(self):
        cfg = make_tv()
        u = tv_feedback(AgentState(x=0.0, vx=9.0, y=0.0, vy=0.0), cfg)
        assert u[0] == pytest.approx(-0.55)
        assert u[1] == pytest.approx(0.0)

    def test_saturation(self):
        cfg = make_tv()
        u = tv_feedback(AgentState(x=0.0, vx=108.0, y=50.0, vy=20.0), cfg)
        assert u[0] == cfg.u_min[0]
        assert u[1] == cfg.u_min[1]

    def test_longitudinal_position_ignored(self):
        cfg = make_tv()
        u = tv_feedback(AgentState(x=999.0, vx=8.0, y=0.0, vy=0.0), cfg)
        np.testing.assert_allclose(u, [0.0, 0.0], atol=1e-12)

    def test_rotated_frame(self):
        # TV driving north: a +1 m/s longitudinal (vy) error maps to
        # braking along the travel direction.
        cfg = make_tv(heading=np.pi / 2, ref_point=(1.5, 0.0), ref_speed=8.0)
        u_world = cfg.feedback(AgentState(x=1.5, vx=0.0, y=30.0, vy=9.0))
        assert u_world[0] == pytest.approx(-0.55)  # local longitudinal

    def test_gain_sparsity_enforced(self):
        with pytest.raises(AgentConfigError):
            TVConfig(
                heading=0.0,
                ref_point=(0, 0),
                ref_speed=8.0,
                K=np.ones((2, 4)),
                sigma_w=np.eye(2),
            )


class TestSimStep:
    def test_noiseless_on_reference(self):
        cfg = make_tv()
        st = AgentState(x=0.0, vx=8.0, y=0.0, vy=0.0)
        nxt = agent_sim_step(st, cfg, np.zeros(2), 0.2)
        assert nxt.x == pytest.approx(0.0 + 8.0 * 0.2)
        assert nxt.vx == pytest.approx(8.0)

    def test_pedestrian_mean_motion(self):
        cfg = make_ped()
        st = AgentState(x=-15.0, vx=0.0, y=-11.0, vy=1.2)
        nxt = agent_sim_step(st, cfg, np.zeros(2), 0.2)
        assert nxt.y == pytest.approx(-11.0 + 0.24)
        assert nxt.x == pytest.approx(-15.0)

    def test_sample_mean_matches_noiseless(self):
        # Monte Carlo oracle: mean of sampled steps equals the noiseless
        # step within 3 sigma / sqrt(N).
        cfg = make_tv()
        st = AgentState(x=0.0, vx=7.5, y=0.3, vy=-0.1)
        rng = np.random.default_rng(3)
        L = np.linalg.cholesky(cfg.sigma_w)
        n = 100_000
        acc = np.zeros(4)
        for w in rng.standard_normal((n, 2)) @ L.T:
            acc += agent_sim_step(st, cfg, w, 0.2).as_array()
        mean = acc / n
        noiseless = agent_sim_step(st, cfg, np.zeros(2), 0.2).as_array()
        _, B = point_mass_matrices(0.2)
        step_std = np.sqrt(np.diag(B @ cfg.sigma_w @ B.T))
        np.testing.assert_array_less(np.abs(mean - noiseless), 3 * step_std / np.sqrt(n) + 1e-12)

    def test_saturation_always_respected(self):
        cfg = make_tv()
        rng = np.random.default_rng(5)
        st = AgentState(x=0.0, vx=20.0, y=5.0, vy=3.0)
        for _ in range(200):
            w = rng.normal(0, 3, size=2)
            u = np.clip(cfg.K @ cfg.local_error(st) + w, cfg.u_min, cfg.u_max)
            assert np.all(u >= np.asarray(cfg.u_min) - 1e-12)
            assert np.all(u <= np.asarray(cfg.u_max) + 1e-12)
            st = agent_sim_step(st, cfg, w, 0.2)


class TestPredictMean:
    def test_pedestrian_constant_velocity(self):
        cfg = make_ped()
        st = AgentState(x=-15.0, vx=0.0, y=-11.0, vy=1.2)
        traj = predict_mean(st, cfg, 5, 0.2)
        np.testing.assert_allclose(traj[:, 2], -11.0 + 0.24 * np.arange(6), atol=1e-12)

    def test_tv_on_reference_constant_velocity(self):
        cfg = make_tv()
        st = AgentState(x=3.0, vx=8.0, y=0.0, vy=0.0)
        traj = predict_mean(st, cfg, 10, 0.2)
        np.testing.assert_allclose(traj[:, 0], 3.0 + 1.6 * np.arange(11), atol=1e-10)

    def test_velocity_error_decay_matches_eigen_rollout(self):
        # Oracle: rollout through the eigen-decomposition of A + BK.
        cfg = make_tv()
        st = AgentState(x=0.0, vx=9.5, y=0.0, vy=0.0)  # +1.5 m/s error, no saturation
        T = 0.2
        traj = predict_mean(st, cfg, 20, T)
        Acl = closed_loop_matrix(cfg, T)
        evals, V = np.linalg.eig(Acl)
        err0 = cfg.local_error(st)
        c = np.linalg.solve(V, err0)
        for k in (5, 10, 20):
            err_k = np.real(V @ (evals**k * c))
            assert traj[k, 1] - cfg.ref_speed == pytest.approx(err_k[1], abs=1e-9)


class TestStability:
    def test_paper_gains_stable_both_rates(self):
        assert_stable_feedback(make_tv(), 0.2)
        k_h = TVConfig(
            heading=0.0,
            ref_point=(0, 0),
            ref_speed=8.0,
            K=np.array([[0.0, -0.34, 0.0, 0.0], [0.0, 0.0, -0.21, -0.67]]),
            sigma_w=np.diag([0.15, 0.03]),
        )
        assert_stable_feedback(k_h, 2.0)

    def test_unstable_gain_rejected(self):
        bad = TVConfig(
            heading=0.0,
            ref_point=(0, 0),
            ref_speed=8.0,
            K=np.array([[0.0, 11.0, 0.0, 0.0], [0.0, 0.0, -0.63, -1.15]]),
            sigma_w=np.eye(2),
        )
        with pytest.raises(AgentConfigError):
            assert_stable_feedback(bad, 0.2)

    def test_determinism(self):
        cfg = make_tv()
        st0 = AgentState(x=0.0, vx=7.0, y=0.5, vy=0.0)

        def run(seed):
            rng = np.random.default_rng(seed)
            L = np.linalg.cholesky(cfg.sigma_w)
            st = st0
            out = []
            for _ in range(50):
                st = agent_sim_step(st, cfg, L @ rng.standard_normal(2), 0.2)
                out.append(st.as_array())
            return np.array(out)

        np.testing.assert_array_equal(run(42), run(42))
