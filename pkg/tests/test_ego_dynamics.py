import numpy as np
import pytest

from urbansmpc.ego_dynamics import (
    EgoInput,
    EgoParams,
    EgoState,
    SingularityError,
    continuous_dynamics,
    discretize,
    linear_prediction_model,
    linearize,
    plant_step,
)

PARAMS = EgoParams()


def fd_jacobians(xi0, kappa, params, h=1e-6):
    """Central finite differences of the continuous dynamics."""
    x0 = xi0.as_array()
    A = np.zeros((4, 4))
    for j in range(4):
        dx = np.zeros(4)
        dx[j] = h
        fp = continuous_dynamics(EgoState.from_array(x0 + dx), EgoInput(0, 0), kappa, params)
        fm = continuous_dynamics(EgoState.from_array(x0 - dx), EgoInput(0, 0), kappa, params)
        A[:, j] = (fp - fm) / (2 * h)
    A[:, 0] = 0.0  # kappa'(s)=0 approximation: no explicit s dependence anyway
    B = np.zeros((4, 2))
    for j, mk in enumerate([(h, 0.0), (0.0, h)]):
        fp = continuous_dynamics(xi0, EgoInput(mk[0], mk[1]), kappa, params)
        fm = continuous_dynamics(xi0, EgoInput(-mk[0], -mk[1]), kappa, params)
        B[:, j] = (fp - fm) / (2 * h)
    return A, B


class TestContinuousDynamics:
    def test_straight_coasting(self):
        f = continuous_dynamics(EgoState(0, 0, 0, 10), EgoInput(0, 0), 0.0, PARAMS)
        np.testing.assert_allclose(f, [10, 0, 0, 0], atol=1e-12)

    def test_curved_road_heading_rate(self):
        # phi_dot = v * (0 - kappa * 1/1) = -1 at v=10, kappa=0.1, d=0
        f = continuous_dynamics(EgoState(0, 0, 0, 10), EgoInput(0, 0), 0.1, PARAMS)
        np.testing.assert_allclose(f, [10, 0, -1, 0], atol=1e-12)

    def test_pure_acceleration(self):
        f = continuous_dynamics(EgoState(0, 0, 0, 5), EgoInput(2, 0), 0.0, PARAMS)
        np.testing.assert_allclose(f, [5, 0, 0, 2], atol=1e-12)

    def test_singularity_guard(self):
        with pytest.raises(SingularityError):
            continuous_dynamics(EgoState(0, 10.0, 0, 5), EgoInput(0, 0), 0.1, PARAMS)


class TestLinearize:
    def test_flat_road_structure(self):
        A, B = linearize(EgoState(0, 0, 0, 10), 0.0, PARAMS)
        assert A[0, 3] == pytest.approx(1.0)
        assert A[0, 2] == pytest.approx(0.0)
        assert B[3, 0] == pytest.approx(1.0)

    def test_steering_gain(self):
        # d(phi_dot)/d(delta) at delta=0 equals v / (l_f + l_r)
        v = 7.3
        _, B = linearize(EgoState(0, 0, 0.1, v), 0.0, PARAMS)
        assert B[2, 1] == pytest.approx(v / (PARAMS.l_f + PARAMS.l_r), rel=1e-12)

    def test_lateral_heading_coupling(self):
        A, _ = linearize(EgoState(0, 0, 0, 8.0), 0.0, PARAMS)
        assert A[1, 2] == pytest.approx(8.0)

    def test_matches_finite_differences_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            xi0 = EgoState(
                s=float(rng.uniform(0, 100)),
                d=float(rng.uniform(-1, 1)),
                phi=float(rng.uniform(-0.3, 0.3)),
                v=float(rng.uniform(0.1, 13)),
            )
            kappa = float(rng.uniform(-0.2, 0.2))
            A, B = linearize(xi0, kappa, PARAMS)
            A_fd, B_fd = fd_jacobians(xi0, kappa, PARAMS)
            np.testing.assert_allclose(A, A_fd, rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(B, B_fd, rtol=1e-6, atol=1e-6)


class TestDiscretize:
    def test_zero_dynamics(self):
        A_l = np.zeros((4, 4))
        B_l = np.ones((4, 2))
        model = discretize(A_l, B_l, np.zeros(4), EgoState(0, 0, 0, 0), 0.5)
        np.testing.assert_allclose(model.A_d, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(model.B_d, 0.5 * B_l, atol=1e-12)

    def test_double_integrator_closed_form(self):
        # ZOH of [[0,1],[0,0]] matches the point-mass pattern exactly.
        A_l = np.zeros((4, 4))
        A_l[0, 1] = 1.0
        B_l = np.zeros((4, 2))
        B_l[1, 0] = 1.0
        model = discretize(A_l, B_l, np.zeros(4), EgoState(0, 0, 0, 0), 0.2)
        assert model.A_d[0, 1] == pytest.approx(0.2, abs=1e-14)
        assert model.B_d[0, 0] == pytest.approx(0.02, abs=1e-14)
        assert model.B_d[1, 0] == pytest.approx(0.2, abs=1e-14)

    def test_one_step_at_linearization_point(self):
        xi0 = EgoState(5.0, 0.2, 0.05, 9.0)
        kappa = 0.05
        model = linear_prediction_model(xi0, kappa, PARAMS, 0.2)
        f0 = continuous_dynamics(xi0, EgoInput(0, 0), kappa, PARAMS)
        nxt = model.step(xi0.as_array(), np.zeros(2))
        np.testing.assert_allclose(nxt, xi0.as_array() + f0 * 0.2, atol=1e-12)

    def test_small_T_consistency(self):
        xi0 = EgoState(0, 0.3, -0.1, 11.0)
        A_l, B_l = linearize(xi0, 0.1, PARAMS)
        f0 = continuous_dynamics(xi0, EgoInput(0, 0), 0.1, PARAMS)
        T = 1e-4
        model = discretize(A_l, B_l, f0, xi0, T)
        np.testing.assert_allclose((model.A_d - np.eye(4)) / T, A_l, rtol=1e-3, atol=1e-3)
        np.testing.assert_allclose(model.B_d / T, B_l, rtol=1e-3, atol=1e-3)


class TestPlant:
    def test_straight_advance(self, turn_path):
        xi = EgoState(10.0, 0.0, 0.0, 10.0)
        nxt = plant_step(xi, EgoInput(0, 0), turn_path, 0.2, PARAMS)
        assert nxt.s == pytest.approx(12.0, abs=1e-9)
        assert nxt.v == pytest.approx(10.0)

    def test_velocity_clamped_at_zero(self, turn_path):
        xi = EgoState(10.0, 0.0, 0.0, 1.0)
        nxt = plant_step(xi, EgoInput(-9.0, 0.0), turn_path, 0.2, PARAMS)
        assert nxt.v == 0.0

    def test_input_saturated(self, turn_path):
        xi = EgoState(10.0, 0.0, 0.0, 5.0)
        nxt = plant_step(xi, EgoInput(50.0, 0.0), turn_path, 0.2, PARAMS)
        assert nxt.v == pytest.approx(5.0 + PARAMS.u_max[0] * 0.2)

    def test_rk4_self_convergence_on_curve(self):
        # Gentle curved segment: 10 substeps vs a 1000-substep reference.
        from urbansmpc.path_geometry import LineSegment, ReferencePath, make_left_turn_bezier

        approach = LineSegment((0.0, 0.0), 0.0, 20.0)
        turn = make_left_turn_bezier((20.0, 0.0), 0.0, (50.0, 30.0), np.pi / 2)
        tail = LineSegment((50.0, 30.0), np.pi / 2, 50.0)
        path = ReferencePath([approach, turn, tail], 20.0, 20.0 + turn.length)
        xi = EgoState(22.0, 0.1, 0.05, 8.0)
        u = EgoInput(1.0, 0.1)
        coarse = plant_step(xi, u, path, 0.2, PARAMS, substeps=10)
        ref = plant_step(xi, u, path, 0.2, PARAMS, substeps=1000)
        err = np.linalg.norm(coarse.as_array() - ref.as_array())
        assert err < 1e-8

    def test_rk4_fourth_order(self):
        # Halving the substep size shrinks the error by ~16x on a sharp turn.
        from urbansmpc.path_geometry import LineSegment, ReferencePath, make_left_turn_bezier

        approach = LineSegment((0.0, 0.0), 0.0, 20.0)
        turn = make_left_turn_bezier((20.0, 0.0), 0.0, (24.5, 4.5), np.pi / 2)
        tail = LineSegment((24.5, 4.5), np.pi / 2, 50.0)
        path = ReferencePath([approach, turn, tail], 20.0, 20.0 + turn.length)
        xi = EgoState(21.0, 0.1, 0.05, 8.0)
        u = EgoInput(1.0, 0.1)
        ref = plant_step(xi, u, path, 0.2, PARAMS, substeps=1000).as_array()
        e10 = np.linalg.norm(plant_step(xi, u, path, 0.2, PARAMS, substeps=10).as_array() - ref)
        e20 = np.linalg.norm(plant_step(xi, u, path, 0.2, PARAMS, substeps=20).as_array() - ref)
        assert e10 / e20 > 10.0

    def test_one_step_prediction_error_order(self, turn_path):
        # Linear-model error vs the plant shrinks by >= 3x when T halves.
        xi0 = EgoState(40.0, 0.2, 0.1, 9.0)
        u = EgoInput(1.5, 0.05)
        kappa = turn_path.curvature_at(xi0.s)

        def one_step_err(T):
            model = linear_prediction_model(xi0, kappa, PARAMS, T)
            pred = model.step(xi0.as_array(), u.as_array())
            truth = plant_step(xi0, u, turn_path, T, PARAMS, substeps=50)
            return np.linalg.norm(pred - truth.as_array())

        assert one_step_err(0.2) / one_step_err(0.1) >= 3.0
