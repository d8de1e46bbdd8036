"""Path simulation, couplings, region exits, and the LSMC value oracle."""

import numpy as np
import pytest

import stoplab as sl
from stoplab.filtering import brownian_bridge_drift
from stoplab.problems import StateSpace
from stoplab.simulate import (
    SimulationError,
    coupling_statistic,
    everywhere_region,
    negative_drift_region,
)


def _problem(drift="0", sigma="1", terminal="x", horizon=1.0, **kw):
    spec = sl.ProblemSpec(
        drift=sl.from_expression(drift, horizon),
        diffusion=sl.from_expression(sigma, horizon, allow_t=False),
        terminal_reward=sl.from_expression(terminal, horizon),
        horizon=horizon,
        **kw,
    )
    lo = 0.05 if kw.get("state_space") is StateSpace.POSITIVE_HALF_LINE else -5
    grid = sl.make_grid(horizon * (0.99 if kw.get("pole_at_horizon") else 1.0), lo, 5, 20, 20)
    return sl.validate_problem(spec, grid)


class TestSimulatePaths:
    def test_deterministic_line_when_sigma_zero(self):
        prob = _problem(drift="0.7", sigma="0")
        bundle = sl.simulate_paths(prob, 0.0, 1.0, 16, 32, seed=5)
        times = bundle.times()
        expect = 1.0 + 0.7 * times
        np.testing.assert_allclose(bundle.states, np.tile(expect, (16, 1)), atol=1e-12)

    def test_brownian_statistics(self):
        prob = _problem(drift="0", sigma="1")
        bundle = sl.simulate_paths(prob, 0.0, 0.0, 100_000, 16, seed=11)
        terminal = bundle.states[:, -1]
        assert abs(terminal.mean()) <= 3.0 / np.sqrt(100_000)
        assert abs(terminal.var() - 1.0) <= 0.05

    def test_step_grid_covers_window(self):
        prob = _problem(drift="0", sigma="1")
        bundle = sl.simulate_paths(prob, 0.25, 0.0, 4, 64, seed=1)
        assert bundle.dt * bundle.n_steps == pytest.approx(1.0 - 0.25, abs=1e-12)

    def test_bridge_terminal_marginals_match_gaussian_chain(self):
        # Euler on the bridge SDE is an exactly Gaussian chain; its mean and
        # variance follow a deterministic recursion, which is the oracle here.
        # Pinning one step beyond the horizon keeps the drift finite on [0, T'].
        horizon = 0.999
        spec = sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("x", horizon),
            horizon=horizon,
        )
        grid = sl.make_grid(horizon, -4, 4, 20, 20)
        prob = sl.validate_problem(spec, grid)
        n_steps, n_paths, x0 = 1998, 20_000, 1.0
        bundle = sl.simulate_paths(prob, 0.0, x0, n_paths, n_steps, seed=99)
        dt = bundle.dt

        mean, var = x0, 0.0
        for k in range(n_steps):
            factor = 1.0 - dt / (1.0 - k * dt)
            mean *= factor
            var = var * factor * factor + dt
        terminal = bundle.states[:, -1]
        se_mean = np.sqrt(var / n_paths)
        assert abs(terminal.mean() - mean) <= 4 * se_mean
        assert abs(terminal.var() - var) <= 5 * var * np.sqrt(2.0 / n_paths)
        # the chain sd tracks the exact bridge marginal with an O(dt) excess
        exact_sd = np.sqrt(0.001 * (1 - 0.001))
        assert abs(np.sqrt(var) - exact_sd) <= 0.25 * exact_sd

    def test_bit_identical_reproduction(self):
        prob = _problem(drift="x*t - 0.3", sigma="1 + x*x/20")
        a = sl.simulate_paths(prob, 0.0, 0.5, 50, 40, seed=123)
        b = sl.simulate_paths(prob, 0.0, 0.5, 50, 40, seed=123)
        assert np.array_equal(a.states, b.states)
        c = sl.simulate_paths(prob, 0.0, 0.5, 50, 40, seed=124)
        assert not np.array_equal(a.states, c.states)

    def test_log_euler_positivity(self):
        prob = _problem(drift="0.5*x", sigma="0.4*x",
                        state_space=StateSpace.POSITIVE_HALF_LINE)
        bundle = sl.simulate_paths(prob, 0.0, 1.0, 200, 64, seed=8)
        assert bundle.scheme == "log_euler"
        assert (bundle.states > 0).all()

    def test_poisoned_paths_flagged_not_fatal(self):
        prob = _problem(drift="exp(x*x)", sigma="2")  # explodes quickly
        bundle = sl.simulate_paths(prob, 0.0, 3.0, 64, 64, seed=3)
        assert bundle.poisoned.any()
        assert np.isfinite(bundle.states).all()  # frozen at last good state

    def test_needs_at_least_one_step(self):
        prob = _problem()
        with pytest.raises(SimulationError):
            sl.simulate_paths(prob, 0.0, 0.0, 4, 0, seed=1)


class TestRegionExit:
    def test_everywhere_never_exits(self):
        path = np.linspace(0, 1, 11)
        assert sl.region_exit_time(path, everywhere_region(), 0.0, 0.1) == 10

    def test_start_outside_is_zero(self):
        region = sl.Region(indicator=lambda t, x: np.asarray(x) > 0)
        path = np.array([-1.0, 1.0, 1.0])
        assert sl.region_exit_time(path, region, 0.0, 0.1) == 0

    def test_crossing_detected_at_step(self):
        region = sl.Region(indicator=lambda t, x: np.asarray(x) > 0)
        path = np.ones(11)
        path[7:] = -1.0
        assert sl.region_exit_time(path, region, 0.0, 0.1) == 7


class TestCoupling:
    def test_identical_start_times_bit_identical(self):
        prob = _problem(drift="1 - t", sigma="1")
        cb = sl.simulate_coupled(prob, 0.5, 0.5, 1.0, everywhere_region(), 100, 64, seed=4)
        assert np.array_equal(cb.late.states, cb.early.states)
        assert (cb.region_exit == 64).all()

    def test_state_free_drift_difference_is_deterministic(self):
        prob = _problem(drift="1 - t", sigma="1")
        u, t = 0.25, 0.5
        cb = sl.simulate_coupled(prob, t, u, 1.0, everywhere_region(), 64, 32, seed=4)
        k = np.arange(33)
        expect = k * cb.late.dt * (u - t)
        diff = cb.late.states - cb.early.states
        np.testing.assert_allclose(diff, np.tile(expect, (64, 1)), atol=1e-12)
        stats, _, _ = coupling_statistic(cb)
        assert stats.max() == 0.0

    def test_comparison_report_constant_drift_exact_zero(self):
        prob = _problem(drift="0.4", sigma="1")
        cb = sl.simulate_coupled(prob, 0.5, 0.25, 1.0, everywhere_region(), 256, 64, seed=9)
        report = sl.comparison_report(cb)
        assert report.verdict == "PASS"
        assert report.worst_violation == 0.0

    def test_bridge_region_coupling_ordered(self):
        spec = sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("x", 1.0),
            horizon=1.0,
            pole_at_horizon=True,
        )
        grid = sl.make_grid(0.99, -5, 5, 20, 20)
        prob = sl.validate_problem(spec, grid)
        region = negative_drift_region(spec.drift)
        cb = sl.simulate_coupled(prob, 0.5, 0.25, 1.0, region, 2000, 127, seed=21)
        assert (cb.region_exit < 127).any()  # some paths do hit x <= 0
        report = sl.comparison_report(cb)
        assert report.verdict == "PASS"

    def test_rejects_bad_time_order(self):
        prob = _problem()
        with pytest.raises(SimulationError):
            sl.simulate_coupled(prob, 0.25, 0.5, 1.0, everywhere_region(), 8, 8, seed=1)


class TestLsmc:
    def test_martingale_value(self):
        prob = _problem(drift="0", sigma="1")
        res = sl.value_lsmc(prob, 0.0, 0.3, 20_000, 32, 3, seed=42)
        assert abs(res.estimate - 0.3) <= 3 * res.standard_error

    def test_positive_drift_waits_to_horizon(self):
        prob = _problem(drift="0.6", sigma="1")
        res = sl.value_lsmc(prob, 0.0, 0.2, 20_000, 32, 3, seed=43)
        assert abs(res.estimate - (0.2 + 0.6)) <= 3 * res.standard_error

    def test_running_reward_only_problem(self):
        # h = 1, zero terminal: never stop early, value = horizon - t
        spec = sl.ProblemSpec(
            drift=sl.constant_field(0.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.constant_field(0.0),
            running_reward=sl.constant_field(1.0),
            horizon=1.0,
        )
        grid = sl.make_grid(1.0, -5, 5, 20, 20)
        prob = sl.validate_problem(spec, grid)
        res = sl.value_lsmc(prob, 0.0, 0.0, 5_000, 64, 2, seed=44)
        assert res.estimate == pytest.approx(1.0, abs=0.02)

    def test_deterministic_given_seed(self):
        prob = _problem(drift="0", sigma="1")
        a = sl.value_lsmc(prob, 0.0, 0.0, 2_000, 16, 3, seed=7)
        b = sl.value_lsmc(prob, 0.0, 0.0, 2_000, 16, 3, seed=7)
        assert a.estimate == b.estimate and a.standard_error == b.standard_error
