import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tadgame.engagement import AgentState, step_agent, step_target
from tadgame.estimator import attacker_dynamics
from tadgame.nmpc import (ControlPlan, NmpcConfig, NmpcSolver, TargetMode, _rollout,
                          evaluate_cost, forecast_attacker, predict_horizon, project_controls,
                          target_mode_constraint)

CFG = NmpcConfig(safe_distance_e=20.0)
TARGET = AgentState(25.0, 30.0, 0.3, 1.0)
DEFENDER = AgentState(0.0, 0.0, 0.78, 4.0)
ATT_MEAN = np.array([50.0, 50.0, -2.2, 0.4])


def random_plan(rng, cfg=CFG):
    c = np.column_stack([rng.uniform(-3, 3, cfg.horizon_steps), rng.uniform(-3, 3, cfg.horizon_steps),
                         rng.uniform(-1, 1, cfg.horizon_steps)])
    return ControlPlan(project_controls(c, cfg, TARGET.alpha))


def random_problem(rng):
    T = AgentState(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3), rng.uniform(0, 2))
    D = AgentState(rng.uniform(-60, 0), rng.uniform(-30, 30), rng.uniform(-3, 3), 4.0)
    A = np.array([rng.uniform(20, 60), rng.uniform(-40, 40), rng.uniform(-3, 3), rng.uniform(-2, 2)])
    return A, T, D


class TestPrediction:
    def test_fixed_point(self):
        traj = predict_horizon(np.array([5.0, 5.0, 0.0, 0.0]), 0.0, AgentState(1, 2), AgentState(-3, 0, 1.0, 0.0),
                               ControlPlan.zeros(CFG), CFG)
        np.testing.assert_array_equal(traj.target, np.tile([1, 2], (6, 1)))
        np.testing.assert_array_equal(traj.attacker, np.tile([5, 5], (6, 1)))
        np.testing.assert_allclose(traj.defender, np.tile([-3, 0], (6, 1)))

    def test_straight_attacker(self):
        att = forecast_attacker(np.array([0.0, 0.0, 0.5, 0.0]), 4.0, 0.05, 6)
        assert math.hypot(*att[-1, :2]) == pytest.approx(4.0 * 0.3, abs=1e-12)
        assert np.allclose(att[:, 2], 0.5)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_sequential_steppers(self, seed):
        rng = np.random.default_rng(seed)
        plan = random_plan(rng)
        traj = predict_horizon(ATT_MEAN, 4.0, TARGET, DEFENDER, plan, CFG)
        T, D, m = TARGET, DEFENDER, ATT_MEAN.copy()
        for ux, uy, w in plan.controls:
            T = step_target(T, ux, uy, CFG.dt, CFG.v_T_max)
            D = step_agent(D, w, CFG.dt)
            m = m + attacker_dynamics(m, 4.0) * CFG.dt
        assert np.abs(traj.target[-1] - (T.x, T.y)).max() < 1e-12
        assert np.abs(traj.defender[-1] - (D.x, D.y)).max() < 1e-12
        assert np.abs(traj.attacker[-1] - m[:2]).max() < 1e-12

    def test_plan_length_checked(self):
        with pytest.raises(ValueError):
            predict_horizon(ATT_MEAN, 4.0, TARGET, DEFENDER, ControlPlan(np.zeros((3, 3))), CFG)


class TestCost:
    def _frozen(self, r, R, cfg):
        traj = predict_horizon(np.array([0.0, 0.0, 0.0, 0.0]), 0.0, AgentState(R, 0), AgentState(0, r, 0, 0.0),
                               ControlPlan.zeros(cfg), cfg)
        return traj

    def test_constant_integrand(self):
        cfg = NmpcConfig(safe_distance_e=0.0)
        assert evaluate_cost(self._frozen(10.0, 50.0, cfg), ControlPlan.zeros(cfg), cfg) == pytest.approx(3.0)

    def test_inactive_hinge(self):
        cfg = NmpcConfig(safe_distance_e=5.0)
        assert evaluate_cost(self._frozen(10.0, 7.0, cfg), ControlPlan.zeros(cfg), cfg) == pytest.approx(3.0)

    def test_active_hinge(self):
        cfg = NmpcConfig(safe_distance_e=9.0)
        assert evaluate_cost(self._frozen(10.0, 7.0, cfg), ControlPlan.zeros(cfg), cfg) == pytest.approx(3.6)

    @pytest.mark.parametrize("seed", range(10))
    def test_trapezoid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        plan = random_plan(rng)
        traj = predict_horizon(ATT_MEAN, 4.0, TARGET, DEFENDER, plan, CFG)
        # integrand on the node grid t_0..t_H with the inputs held piecewise constant
        R0 = math.hypot(TARGET.x - ATT_MEAN[0], TARGET.y - ATT_MEAN[1])
        r0 = math.hypot(DEFENDER.x - ATT_MEAN[0], DEFENDER.y - ATT_MEAN[1])
        R = np.concatenate([[R0], traj.R])
        r = np.concatenate([[r0], traj.r])
        u2 = (plan.controls[:, :2] ** 2).sum(axis=1)
        state = r + np.maximum(0.0, CFG.safe_distance_e - R)
        trap = CFG.dt * (u2.sum() + 0.5 * (state[:-1] + state[1:]).sum())
        assert evaluate_cost(traj, plan, CFG) == pytest.approx(trap, rel=0.05)

    @pytest.mark.parametrize("seed", range(10))
    def test_compiled_cost_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        solver = NmpcSolver(CFG)
        A, T, D = random_problem(rng)
        prob = solver.problem(A, 4.0, T, D)
        plan = random_plan(rng)
        ref = evaluate_cost(predict_horizon(A, 4.0, T, D, plan, CFG), plan, CFG)
        assert prob.cost(plan.controls[None])[0] == pytest.approx(ref, rel=1e-12)

    def test_numpy_rollout_consistent(self):
        plan = random_plan(np.random.default_rng(3))
        Tn, Dn, _ = _rollout(plan.controls[None], (TARGET.x, TARGET.y), DEFENDER, CFG.dt)
        traj = predict_horizon(ATT_MEAN, 4.0, TARGET, DEFENDER, plan, CFG)
        np.testing.assert_array_equal(Tn[0], traj.target)
        np.testing.assert_array_equal(Dn[0], traj.defender)


class TestProjection:
    CS = NmpcConfig(horizon_steps=1, mode=TargetMode.CONSTANT_SPEED)
    VV = NmpcConfig(horizon_steps=1)

    def test_zero_uses_previous_heading(self):
        out = project_controls(np.zeros((1, 3)), self.CS, prev_heading=0.7)
        np.testing.assert_allclose(out[0, :2], [2 * math.cos(0.7), 2 * math.sin(0.7)])

    def test_radial_rescale(self):
        out = project_controls(np.array([[3.0, 4.0, 0.0]]), self.CS)
        np.testing.assert_allclose(out[0, :2], [1.2, 1.6])

    def test_interior_unchanged(self):
        out = project_controls(np.array([[0.5, 0.5, 0.1]]), self.VV)
        np.testing.assert_array_equal(out, [[0.5, 0.5, 0.1]])

    def test_turn_rate_clamped(self):
        out = project_controls(np.array([[0.0, 0.0, -3.0]]), self.VV)
        assert out[0, 2] == -0.5

    def test_zero_inherits_earlier_step_heading(self):
        cfg = NmpcConfig(horizon_steps=3, mode=TargetMode.CONSTANT_SPEED)
        out = project_controls(np.array([[0.0, 1.0, 0], [0.0, 0.0, 0], [1.0, 0.0, 0]]), cfg, 0.3)
        np.testing.assert_allclose(out[:, :2], [[0, 2], [0, 2], [2, 0]], atol=1e-15)

    def test_mode_constraint_wrapper(self):
        plan = ControlPlan(np.array([[3.0, 4.0, 0.2]]))
        out = target_mode_constraint(TargetMode.CONSTANT_SPEED, plan, 2.0)
        np.testing.assert_allclose(out.controls, [[1.2, 1.6, 0.2]])

    @given(st.lists(st.floats(-10, 10), min_size=18, max_size=18), st.sampled_from(list(TargetMode)))
    def test_idempotent(self, vals, mode):
        cfg = NmpcConfig(mode=mode)
        once = project_controls(np.reshape(vals, (6, 3)), cfg, 0.4)
        np.testing.assert_allclose(project_controls(once, cfg, 0.4), once, atol=1e-12)


def _feasible(plan, cfg):
    n = np.hypot(plan.controls[:, 0], plan.controls[:, 1])
    w = plan.controls[:, 2]
    ok = np.all(np.abs(w) <= cfg.alpha_dot_bounds[1])
    if cfg.mode is TargetMode.CONSTANT_SPEED:
        return ok and np.allclose(n, cfg.v_T_max, atol=1e-9)
    return ok and np.all(n <= cfg.v_T_max + 1e-12)


class TestSolver:
    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from(list(TargetMode)))
    def test_monotone_and_feasible(self, seed, mode):
        rng = np.random.default_rng(seed)
        cfg = NmpcConfig(safe_distance_e=rng.uniform(0, 60), mode=mode, max_iters=30)
        A, T, D = random_problem(rng)
        solver = NmpcSolver(cfg)
        warm = ControlPlan(project_controls(random_plan(rng, cfg).controls, cfg, T.alpha))
        ref = evaluate_cost(predict_horizon(A, 4.0, T, D, warm, cfg), warm, cfg)
        out = solver.solve(A, 4.0, T, D, warm)
        assert out.cost <= ref
        assert _feasible(out, cfg)
        np.testing.assert_allclose(project_controls(out.controls, cfg, T.alpha), out.controls, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_step_halving(self, seed):
        rng = np.random.default_rng(seed)
        A, T, D = random_problem(rng)
        prob = NmpcSolver(CFG).problem(A, 4.0, T, D)
        z = random_plan(rng).controls
        g1, g2 = prob.gradient(z, 1e-4), prob.gradient(z, 5e-5)
        assert np.linalg.norm(g1 - g2) <= 1e-2 * np.linalg.norm(g2)

    def test_far_attacker_target_stays_still(self):
        cfg = NmpcConfig(safe_distance_e=20.0)
        out = NmpcSolver(cfg).solve(np.array([200.0, 200.0, -2.3, 0.0]), 4.0, AgentState(0, 0),
                                    AgentState(-50, 0, 0.78, 4.0))
        assert np.hypot(out.controls[:, 0], out.controls[:, 1]).max() < 0.05

    def test_constant_speed_norm(self):
        cfg = NmpcConfig(safe_distance_e=20.0, mode=TargetMode.CONSTANT_SPEED)
        out = NmpcSolver(cfg).solve(ATT_MEAN, 4.0, AgentState(25, 30, -2.2, 2.0), DEFENDER)
        np.testing.assert_allclose(np.hypot(out.controls[:, 0], out.controls[:, 1]), 2.0, atol=1e-6)

    def test_deterministic(self):
        a = NmpcSolver(CFG).solve(ATT_MEAN, 4.0, TARGET, DEFENDER)
        b = NmpcSolver(CFG).solve(ATT_MEAN, 4.0, TARGET, DEFENDER)
        np.testing.assert_array_equal(a.controls, b.controls)

    def test_shifted_plan(self):
        plan = ControlPlan(np.arange(18.0).reshape(6, 3))
        s = plan.shifted().controls
        np.testing.assert_array_equal(s[:5], plan.controls[1:])
        np.testing.assert_array_equal(s[5], plan.controls[5])

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            NmpcConfig(alpha_dot_bounds=(-0.5, 0.4))
        with pytest.raises(ValueError):
            NmpcConfig(safe_distance_e=-1.0)
        assert NmpcConfig().horizon == pytest.approx(0.3)
