"""Obstacle-problem solver: grids, exactness cases, boundaries, residuals."""

import numpy as np
import pytest

import stoplab as sl
from stoplab.filtering import brownian_bridge_drift
from stoplab.grids import GridError
from stoplab.problems import Orientation, StateSpace
from stoplab.solver import NEG_INF, POS_INF


def _spec(drift="0", sigma="1", terminal="x", horizon=1.0, **kw):
    return sl.ProblemSpec(
        drift=sl.from_expression(drift, horizon),
        diffusion=sl.from_expression(sigma, horizon, allow_t=False),
        terminal_reward=sl.from_expression(terminal, horizon),
        horizon=horizon,
        **kw,
    )


def _solve(spec, pad=5.0, n=100, x_ref=0.0, theta=0.5):
    grid = sl.build_grid(spec, pad, n, n, x_ref=x_ref)
    prob = sl.validate_problem(spec, grid)
    return sl.solve_backward(prob, grid, theta=theta)


class TestBuildGrid:
    def test_unit_sigma_covers_pad(self):
        grid = sl.build_grid(_spec(), 5.0, 10, 10, x_ref=0.0)
        assert grid.x_nodes[0] == pytest.approx(-5.0)
        assert grid.x_nodes[-1] == pytest.approx(5.0)

    def test_half_line_clips_to_one_cell(self):
        spec = _spec(drift="0.1*x", sigma="0.5*x", state_space=StateSpace.POSITIVE_HALF_LINE)
        grid = sl.build_grid(spec, 5.0, 10, 100, x_ref=1.0)
        assert grid.x_nodes[0] > 0
        assert grid.x_nodes[0] == pytest.approx(grid.x_nodes[-1] / 100)

    def test_single_interval_rejected(self):
        with pytest.raises(GridError):
            sl.build_grid(_spec(), 5.0, 1, 10)

    def test_pole_shaves_horizon(self):
        spec = sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("x", 1.0),
            horizon=1.0,
            pole_at_horizon=True,
        )
        grid = sl.build_grid(spec, 5.0, 100, 100, x_ref=0.0)
        assert grid.horizon_end == pytest.approx(1.0 - 1.0 / 100)


class TestSolveBackward:
    def test_martingale_fixed_point_exact(self):
        surf = _solve(_spec(drift="0", terminal="x"), n=100)
        assert np.max(np.abs(surf.v - surf.obstacle)) == 0.0
        assert surf.exercise_mask.all()

    def test_constant_drift_matches_analytic(self):
        surf = _solve(_spec(drift="0.5"), pad=7.0, n=200)
        ts, xs = surf.grid.t_nodes, surf.grid.x_nodes
        exact = xs[None, :] + 0.5 * (1.0 - ts[:, None])
        band = np.abs(xs) <= 2.5
        assert np.max(np.abs(surf.v - exact)[:, band]) <= 1e-3
        interior = surf.exercise_mask[:-1, 1:-1]
        assert not interior.any()

    def test_terminal_row_equals_obstacle_exactly(self):
        surf = _solve(_spec(drift="1 - t", terminal="exp(x)"), n=60)
        assert np.array_equal(surf.v[-1], surf.obstacle[-1])

    def test_obstacle_inequality_everywhere(self):
        surf = _solve(_spec(drift="-0.4", terminal="max(x, 0)"), n=80)
        assert np.min(surf.v - surf.obstacle) >= -surf.tol_contact

    def test_x_monotone_value_for_monotone_obstacle(self):
        surf = _solve(_spec(drift="1 - t", terminal="x"), n=80)
        assert np.min(np.diff(surf.v, axis=1)) >= -2 * surf.tol_contact

    def test_running_reward_source_term(self):
        # zero terminal, unit running reward, no stopping: w(t, x) = T_eff - t
        spec = sl.ProblemSpec(
            drift=sl.constant_field(0.0), diffusion=sl.constant_field(1.0),
            terminal_reward=sl.constant_field(0.0),
            running_reward=sl.constant_field(1.0), horizon=1.0,
        )
        surf = _solve(spec, n=80)
        ts = surf.grid.t_nodes
        band = np.abs(surf.grid.x_nodes) <= 1.5  # clear of edge-clamp error
        expect = (ts[-1] - ts)[:, None]
        assert np.max(np.abs(surf.v[:, band] - expect)) <= 1e-3

    def test_drift_pole_on_grid_raises(self):
        # pole inside the grid because pole_at_horizon was not declared
        spec = sl.ProblemSpec(
            drift=sl.from_expression("-x/(1 - t)", 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("x", 1.0),
            horizon=1.0,
        )
        grid = sl.build_grid(spec, 5.0, 50, 50, x_ref=0.0)
        with pytest.raises((sl.problems.ValidationError, sl.solver.SolverError)):
            prob = sl.validate_problem(spec, grid)
            sl.solve_backward(prob, grid)


class TestExtractBoundary:
    def test_all_continuation_gives_neg_inf(self):
        surf = _solve(_spec(drift="0.5"), n=60)
        b = sl.extract_boundary(surf)
        assert (b.values[:-1] == NEG_INF).all()
        assert b.values[-1] == POS_INF  # terminal slice stops everywhere

    def test_all_stopping_gives_pos_inf(self):
        surf = _solve(_spec(drift="0"), n=60)
        b = sl.extract_boundary(surf)
        assert (b.values == POS_INF).all()

    def test_upper_surface_rejected(self):
        spec = _spec(drift="0", orientation=Orientation.UPPER)
        with pytest.raises(sl.solver.SolverError):
            sl.extract_boundary(_solve(spec, n=40))

    def test_unflip_negates_and_swaps_sentinels(self):
        surf = _solve(_spec(drift="0.5"), n=40)
        b = sl.extract_boundary(surf)
        bu = sl.unflip_boundary(b)
        assert bu.orientation is Orientation.UPPER
        assert (bu.values[:-1] == POS_INF).all()
        assert bu.values[-1] == NEG_INF

    def test_bridge_boundary_scaling_against_refined_grid(self):
        spec_up = sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("x", 1.0),
            horizon=1.0, orientation=Orientation.UPPER, pole_at_horizon=True,
        )
        spec = sl.flip_orientation(spec_up)
        means = {}
        for n in (100, 400):
            surf = _solve(spec, n=n)
            b = sl.unflip_boundary(sl.extract_boundary(surf))
            ts = b.t_nodes
            mid = (ts >= 1 / 3) & (ts <= 2 / 3)
            means[n] = float(np.mean(b.values[mid] / np.sqrt(1.0 - ts[mid])))
        assert abs(means[100] - means[400]) / abs(means[400]) <= 0.05

    def test_non_separated_slices_warn_not_fail(self):
        surf = _solve(_spec(drift="0.5"), n=20)
        # hand-corrupt the mask to a non-separated slice
        mask = surf.exercise_mask.copy()
        mask[3, 1:-1] = False
        mask[3, 5] = True
        mask[3, 2] = True
        mask[3, 3] = False
        corrupted = sl.ValueSurface(
            grid=surf.grid, v=surf.v, obstacle=surf.obstacle, exercise_mask=mask,
            tol_contact=surf.tol_contact, problem=surf.problem, meta=surf.meta,
        )
        b = sl.extract_boundary(corrupted)
        assert 3 in b.non_separated


class TestResidualAndConvergence:
    def test_martingale_residual_zero(self):
        surf = _solve(_spec(drift="0"), n=60)
        report = sl.residual_complementarity(surf)
        assert report.verdict == "PASS"
        assert report.worst_violation <= 1e-12

    def test_constant_drift_residual_passes(self):
        surf = _solve(_spec(drift="0.5"), n=60)
        assert sl.residual_complementarity(surf).verdict == "PASS"

    def test_bridge_residual_passes_coarse_and_fine(self):
        spec = sl.flip_orientation(sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("exp(x)", 1.0),
            horizon=1.0, orientation=Orientation.UPPER, pole_at_horizon=True,
        ))
        for n in (25, 200):
            surf = _solve(spec, pad=4.0, n=n)
            assert sl.residual_complementarity(surf).verdict == "PASS"

    def test_grid_cascade_changes_shrink(self):
        spec = sl.flip_orientation(sl.ProblemSpec(
            drift=brownian_bridge_drift(0.0, 1.0),
            diffusion=sl.constant_field(1.0),
            terminal_reward=sl.from_expression("exp(x)", 1.0),
            horizon=1.0, orientation=Orientation.UPPER, pole_at_horizon=True,
        ))
        values = []
        for n in (80, 160, 320):
            surf = _solve(spec, pad=4.0, n=n)
            j = int(np.argmin(np.abs(surf.grid.x_nodes)))
            values.append(surf.v[0, j])
        first, second = abs(values[1] - values[0]), abs(values[2] - values[1])
        assert second <= max(first, 1e-9)
