import numpy as np
import pytest

from gaps.core import GapsConfig, run_gaps
from gaps.envs import make_constant_noise_env, make_fig2_env
from gaps.envs.linear_feedback import LinearFeedbackEnv
from gaps.errors import EmptyGrid, NonPositiveRegret
from gaps.metrics import (
    dynamic_regret,
    local_regret,
    make_theta_grid,
    regret_slope,
    static_and_adaptive_regret,
    surrogate_table,
    variation_intensity,
)
from gaps.oracles import ideal_gradient
from gaps.system import Box, rollout


def brute_force_adaptive(costs, table):
    """All-intervals enumeration (the oracle for the Kadane-style scan)."""
    T, G = table.shape
    best = -np.inf
    for t1 in range(T):
        for t2 in range(t1, T):
            seg = np.sum(costs[t1 : t2 + 1]) - np.min(
                np.sum(table[t1 : t2 + 1], axis=0)
            )
            best = max(best, seg)
    return best


class TestStaticAdaptive:
    def test_playing_best_theta_gives_zero_regret(self):
        T, G = 10, 3
        table = np.abs(np.random.default_rng(0).standard_normal((T, G))) + 0.5
        costs = table[:, 1].copy()  # play grid point 1 exactly
        table[:, 1] = np.minimum(table[:, 1], table.min(axis=1))  # make it best
        costs = table[:, 1].copy()
        rep = static_and_adaptive_regret(costs, table, np.arange(G)[:, None])
        assert rep.static_regret == pytest.approx(0.0, abs=1e-12)
        assert rep.adaptive_regret == pytest.approx(0.0, abs=1e-12)

    def test_hand_enumerated_three_steps(self):
        costs = np.array([2.0, 1.0, 3.0])
        table = np.array([[1.0, 2.5], [1.5, 0.5], [2.0, 2.0]])
        rep = static_and_adaptive_regret(costs, table, np.array([[0.0], [1.0]]))
        assert rep.static_regret == pytest.approx(6.0 - 4.5)
        assert rep.adaptive_regret == pytest.approx(brute_force_adaptive(costs, table))

    def test_adaptive_at_least_static(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            T = int(rng.integers(1, 30))
            G = int(rng.integers(1, 5))
            costs = rng.standard_normal(T)
            table = rng.standard_normal((T, G))
            rep = static_and_adaptive_regret(costs, table, np.arange(G)[:, None])
            assert rep.adaptive_regret >= rep.static_regret - 1e-12

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            T = int(rng.integers(1, 30))
            G = int(rng.integers(1, 6))
            costs = rng.standard_normal(T) * rng.uniform(0.5, 3)
            table = rng.standard_normal((T, G))
            rep = static_and_adaptive_regret(costs, table, np.arange(G)[:, None])
            expected = brute_force_adaptive(costs, table)
            assert rep.adaptive_regret == pytest.approx(expected, abs=1e-10)
            t1, t2 = rep.adaptive_interval
            seg = np.sum(costs[t1 : t2 + 1]) - np.min(np.sum(table[t1 : t2 + 1], axis=0))
            assert seg == pytest.approx(expected, abs=1e-10)

    def test_grid_refinement_monotonicity(self):
        rng = np.random.default_rng(5)
        T = 25
        costs = rng.standard_normal(T)
        table = rng.standard_normal((T, 6))
        small = static_and_adaptive_regret(costs, table[:, :3], np.arange(3)[:, None])
        full = static_and_adaptive_regret(costs, table, np.arange(6)[:, None])
        assert full.static_regret >= small.static_regret
        assert full.adaptive_regret >= small.adaptive_regret

    def test_empty_grid_raises(self):
        with pytest.raises(EmptyGrid):
            static_and_adaptive_regret(np.ones(3), np.ones((3, 0)), np.ones((0, 1)))


class TestSurrogateTable:
    def test_batch_path_matches_rollouts(self):
        env = make_fig2_env(T=60, seed=7)
        grid = make_theta_grid(env.theta_set, 11)
        table = surrogate_table(env, grid, 60)
        for g, theta in enumerate(grid):
            ref = rollout(env, theta, T=60).costs
            assert np.allclose(table[:, g], ref, rtol=1e-12, atol=1e-12)

    def test_grid_shapes(self):
        assert make_theta_grid(Box([0.0], [1.0]), 101).shape == (101, 1)
        assert make_theta_grid(Box([0.0, 0.0], [1.0, 1.0]), 11).shape == (121, 2)
        sobol = make_theta_grid(Box([0.0] * 3, [1.0] * 3))
        assert sobol.shape == (512, 3)
        with pytest.raises(ValueError):
            make_theta_grid(Box([0.0] * 7, [1.0] * 7))


class TestLocalRegret:
    def test_zero_at_stationary_points(self):
        # The surrogate is exactly quadratic in the confidence, so each
        # step's stationary point follows from two gradient evaluations;
        # playing that sequence drives the metric to round-off.
        env = make_fig2_env(T=30, seed=1)
        history = np.empty((30, 1))
        for t in range(30):
            g0 = ideal_gradient(env, np.array([0.0]), t, "chain")[0]
            g1 = ideal_gradient(env, np.array([1.0]), t, "chain")[0]
            history[t, 0] = 0.5 if g1 == g0 else -g0 / (g1 - g0)
        assert local_regret(env, history, 30) < 1e-12

    def test_single_step_hand_value(self, tanh_system):
        theta = np.array([0.3, -0.5])
        g = ideal_gradient(tanh_system, theta, 0, "chain")
        assert local_regret(tanh_system, theta[None, :], 1) == pytest.approx(
            float(g @ g), abs=1e-12
        )

    def test_desk_scale_runtime(self):
        # The O(T^2) evaluation stays within the documented budget
        # (60 s for T = 2000 on laptop-class hardware).
        import time

        T = 2000
        env = make_fig2_env(T=T, seed=0)
        history = np.full((T, 1), 0.7)
        start = time.time()
        value = local_regret(env, history, T)
        elapsed = time.time() - start
        assert np.isfinite(value) and value > 0
        assert elapsed < 60.0


class TestDynamicRegret:
    def test_own_history_gives_zero(self):
        env = make_fig2_env(T=50, seed=2)
        cfg = GapsConfig(eta=0.03, B=8, theta0=[1.0], set=env.theta_set)
        traj = run_gaps(env, cfg, 50)
        rep = dynamic_regret(traj.costs, traj.thetas, env)
        assert rep.regret == pytest.approx(0.0, abs=1e-9)

    def test_constant_comparator_equals_static_regret_of_that_point(self):
        env = make_fig2_env(T=50, seed=2)
        cfg = GapsConfig(eta=0.03, B=8, theta0=[1.0], set=env.theta_set)
        traj = run_gaps(env, cfg, 50)
        theta = np.array([0.4])
        rep = dynamic_regret(traj.costs, np.tile(theta, (50, 1)), env)
        ref = rollout(env, theta, T=50)
        assert rep.regret == pytest.approx(traj.total_cost - ref.total_cost, abs=1e-9)
        assert rep.comparator_path_length == 0.0

    def test_switching_comparator_hand_rollout(self):
        env = make_fig2_env(T=4, seed=9)
        comparator = np.array([[1.0], [1.0], [0.2], [0.2]])
        costs = np.full(4, 2.0)
        rep = dynamic_regret(costs, comparator, env)
        x = env.x0.copy()
        total = 0.0
        for t in range(4):
            u = env.policy(t, x, comparator[t])
            total += env.cost(t, x, u)
            x = env.dynamics(t, x, u)
        assert rep.regret == pytest.approx(8.0 - total, abs=1e-12)
        assert rep.comparator_path_length == pytest.approx(0.8)


class TestVariationIntensity:
    def test_time_invariant_system_zero(self):
        # Freeze the disturbance and prediction streams so the (dynamics,
        # policy, cost) triple is literally time-invariant.
        env = make_constant_noise_env(T=40, seed=0)
        env.w = np.broadcast_to(env.w[0], env.w.shape).copy()
        env.w_pred = np.broadcast_to(env.w_pred[0], env.w_pred.shape).copy()
        assert variation_intensity(env, T=20, sample_count=50, rng=0) == 0.0

    def test_mass_switches_concentrate_variation(self):
        from gaps.envs import IidGaussian, make_pendulum_env
        from gaps.envs.pendulum import PendulumParams

        params = PendulumParams(masses=(1.0, 1.3), switch_period=1.0)  # 50 steps
        env = make_pendulum_env(200, IidGaussian(0.0), seed=0, params=params)
        v_60 = variation_intensity(env, T=60, sample_count=100, rng=1)
        v_100 = variation_intensity(env, T=100, sample_count=100, rng=1)
        v_150 = variation_intensity(env, T=150, sample_count=100, rng=1)
        assert v_60 > 0.0
        # One switch inside [1, 60) and [1, 100); a second lands at t = 100.
        assert v_100 == pytest.approx(v_60, rel=1e-12)
        assert v_150 == pytest.approx(2.0 * v_100, rel=1e-9)

    def test_linear_drift_within_ten_percent(self):
        # A_t changes by delta each step; sup over the ball of radius R is
        # delta * R for scalar dynamics.
        T = 20
        delta = 0.05
        A = np.array([[[0.5 + delta * t]] for t in range(T)])
        env = LinearFeedbackEnv(
            A, [[1.0]], [[1.0]], [[1.0]], np.zeros((T, 1)),
            theta_set=Box([0.2], [0.8]),
        )
        R = 2.0
        v = variation_intensity(
            env, T=T, sample_count=400, state_radius=R, action_radius=R, rng=0
        )
        expected = (T - 1) * delta * R
        assert v == pytest.approx(expected, rel=0.10)


class TestSlope:
    def test_exact_sqrt_growth(self):
        pts = [(t, 3.0 * np.sqrt(t)) for t in [100, 400, 1600, 6400]]
        assert regret_slope(pts) == pytest.approx(0.5, abs=1e-12)

    def test_exact_linear_growth(self):
        pts = [(t, 0.25 * t) for t in [10, 100, 1000]]
        assert regret_slope(pts) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(NonPositiveRegret):
            regret_slope([(10, 1.0), (100, -0.5), (1000, 2.0)])

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            regret_slope([(10, 1.0), (100, 2.0)])
