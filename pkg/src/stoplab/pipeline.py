"""Run orchestration: validate -> solve -> simulate -> check -> export.

Upper-boundary problems are reflected for the solver (which extracts lower
boundaries), then the surface and boundary are mapped back, so every check
runs in the problem's original frame.  The reflected solve plus negated
boundary is exactly the original upper boundary.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import checks as checkmod
from . import filtering
from .config import ProblemConfig, RunConfig, save_config_text
from .fields import from_expression
from .problems import (
    Orientation,
    ProblemSpec,
    StateSpace,
    ValidatedProblem,
    flip_orientation,
    reduce_to_running_reward,
    validate_problem,
)
from .reports import CheckReport, FAIL, PASS
from .simulate import (
    comparison_report,
    everywhere_region,
    negative_drift_region,
    simulate_coupled,
    simulate_paths,
    value_lsmc,
)
from .solver import (
    Boundary,
    ValueSurface,
    build_grid,
    extract_boundary,
    residual_complementarity,
    solve_backward,
    unflip_boundary,
    unflip_surface,
)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunArtifacts:
    config: RunConfig
    run_id: str
    problem: ValidatedProblem            # original frame
    surface: ValueSurface                # original frame
    boundary: Boundary                   # original frame
    reports: list[CheckReport]
    warnings: tuple[str, ...]
    timings: dict[str, float] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)
    lsmc: Optional[object] = None

    @property
    def exit_ok(self) -> bool:
        return all(r.ok for r in self.reports)


def build_problem(cfg: ProblemConfig) -> ProblemSpec:
    """Materialize the coefficient fields described by a problem config."""
    horizon = cfg.horizon
    if cfg.drift is not None:
        drift = from_expression(cfg.drift, horizon, role="drift")
        pole = bool(cfg.pole_at_horizon)
    else:
        fam = cfg.drift_family
        if fam == "bm_time_drift":
            mu_t = from_expression(cfg.mu_t, horizon, role="mu_t")
            drift = filtering.bm_time_drift(lambda t: mu_t(t, 0.0), source=cfg.mu_t)
        elif fam == "gbm":
            gamma = from_expression(cfg.gamma_t, horizon, role="gamma_t")
            drift = filtering.gbm_drift(lambda t: gamma(t, 0.0), source=cfg.gamma_t)
        elif fam == "brownian_bridge":
            drift = filtering.brownian_bridge_drift(cfg.pin, horizon)
        elif fam == "ou_time_mean":
            mean_t = from_expression(cfg.mean_t, horizon, role="mean_t")
            drift = filtering.ou_time_mean_drift(cfg.rate, lambda t: mean_t(t, 0.0),
                                                 source=cfg.mean_t)
        else:  # filtering
            if cfg.prior == "two_point":
                prior = filtering.two_point_prior(cfg.p, cfg.low, cfg.high)
            else:
                prior = filtering.gaussian_prior(cfg.prior_mean, cfg.prior_var)
            drift = filtering.filtering_drift(prior)
        pole = cfg.pole_at_horizon if cfg.pole_at_horizon is not None \
            else (fam == "brownian_bridge")

    sigma = from_expression(cfg.sigma, horizon, allow_t=False, role="sigma")
    terminal = from_expression(cfg.terminal, horizon, role="terminal")
    running = from_expression(cfg.running, horizon, role="running") if cfg.running else None
    return ProblemSpec(
        drift=drift,
        diffusion=sigma,
        terminal_reward=terminal,
        running_reward=running,
        horizon=horizon,
        state_space=StateSpace(cfg.state_space),
        orientation=Orientation.LOWER if cfg.orientation == "lower" else Orientation.UPPER,
        pole_at_horizon=pole,
    )


def value_at(surface: ValueSurface, t: float, x: float) -> float:
    """Bilinear interpolation of the solved value at an off-grid point."""
    ts, xs = surface.grid.t_nodes, surface.grid.x_nodes
    k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
    j = int(np.clip(np.searchsorted(xs, x) - 1, 0, len(xs) - 2))
    wt = 0.0 if ts[k + 1] == ts[k] else (t - ts[k]) / (ts[k + 1] - ts[k])
    wx = 0.0 if xs[j + 1] == xs[j] else (x - xs[j]) / (xs[j + 1] - xs[j])
    wt, wx = float(np.clip(wt, 0, 1)), float(np.clip(wx, 0, 1))
    v = surface.v
    return float(
        (1 - wt) * ((1 - wx) * v[k, j] + wx * v[k, j + 1])
        + wt * ((1 - wx) * v[k + 1, j] + wx * v[k + 1, j + 1])
    )


def run_problem(cfg: RunConfig, out_dir: Optional[str] = None, refine: int = 0,
                seed_override: Optional[int] = None) -> RunArtifacts:
    """Execute the full pipeline for one configuration.

    Any module error aborts with a StageError naming the stage.  The run is
    deterministic given the config and seed; reports list one verdict per
    requested check.
    """
    timings: dict[str, float] = {}
    reports: list[CheckReport] = []

    def timed(stage):
        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                timings[stage] = time.perf_counter() - self.t0
                if exc is not None and not isinstance(exc, StageError):
                    raise StageError(stage, exc) from exc

        return _Timer()

    grid_cfg = cfg.grid
    nt, nx = grid_cfg.nt * (2 ** refine), grid_cfg.nx * (2 ** refine)
    sim_cfg = cfg.simulation
    if seed_override is not None and sim_cfg is not None:
        from dataclasses import replace

        sim_cfg = replace(sim_cfg, seed=seed_override)

    with timed("build_problem"):
        original_spec = build_problem(cfg.problem)

    with timed("validate"):
        probe_grid = build_grid(original_spec, grid_cfg.x_pad, nt, nx, x_ref=grid_cfg.x_ref)
        original = validate_problem(original_spec, probe_grid)
        warnings = original.warnings

    flipped = original_spec.orientation is Orientation.UPPER
    with timed("prepare"):
        solve_spec = flip_orientation(original_spec) if flipped else original_spec
        if cfg.problem.reduce:
            solve_spec = reduce_to_running_reward(solve_spec)
        solve_ref = None if grid_cfg.x_ref is None else (
            -grid_cfg.x_ref if flipped else grid_cfg.x_ref
        )
        solve_grid = build_grid(solve_spec, grid_cfg.x_pad, nt, nx, x_ref=solve_ref)
        solve_problem = validate_problem(solve_spec, solve_grid)
        warnings = warnings + tuple(w for w in solve_problem.warnings if w not in warnings)

    with timed("solve"):
        solve_surface = solve_backward(solve_problem, solve_grid, theta=grid_cfg.theta)
        solve_boundary = extract_boundary(solve_surface)

    with timed("unflip"):
        if flipped:
            check_problem_spec = original_spec
            if cfg.problem.reduce:
                check_problem_spec = reduce_to_running_reward(original_spec)
            check_problem = validate_problem(
                check_problem_spec,
                build_grid(check_problem_spec, grid_cfg.x_pad, nt, nx, x_ref=grid_cfg.x_ref),
            )
            surface = unflip_surface(solve_surface, check_problem)
            boundary = unflip_boundary(solve_boundary)
        else:
            check_problem = solve_problem
            surface = solve_surface
            boundary = solve_boundary

    couplings = []
    lsmc_result = None
    bundles = {}
    if sim_cfg is not None:
        with timed("simulate"):
            if sim_cfg.couplings:
                region = (
                    everywhere_region()
                    if sim_cfg.region == "everywhere"
                    else negative_drift_region(original.spec.drift)
                )
                for i, (u, t, x) in enumerate(sim_cfg.couplings):
                    cb = simulate_coupled(original, t, u, x, region,
                                          sim_cfg.n_paths, sim_cfg.n_steps,
                                          sim_cfg.seed + i)
                    couplings.append(cb)
            if sim_cfg.dump_paths:
                start_x = sim_cfg.lsmc_x
                if start_x is None:
                    start_x = grid_cfg.x_ref if grid_cfg.x_ref is not None else (
                        1.0 if original_spec.state_space is StateSpace.POSITIVE_HALF_LINE else 0.0
                    )
                bundles["paths"] = simulate_paths(original, sim_cfg.lsmc_t, start_x,
                                                  sim_cfg.n_paths, sim_cfg.n_steps,
                                                  sim_cfg.seed)
            if sim_cfg.lsmc:
                x0 = sim_cfg.lsmc_x if sim_cfg.lsmc_x is not None else (
                    grid_cfg.x_ref if grid_cfg.x_ref is not None else 0.0
                )
                solve_x0 = -x0 if flipped else x0
                lsmc_result = value_lsmc(solve_problem, sim_cfg.lsmc_t, solve_x0,
                                         sim_cfg.n_paths, sim_cfg.n_steps,
                                         sim_cfg.lsmc_degree, sim_cfg.seed)

    with timed("checks"):
        for name in cfg.checks:
            reports.append(
                _run_check(name, check_problem, surface, boundary, solve_surface,
                           couplings, lsmc_result, sim_cfg, cfg)
            )

    run_id = hashlib.sha256(save_config_text(cfg).encode()).hexdigest()[:16]
    artifacts = RunArtifacts(
        config=cfg,
        run_id=run_id,
        problem=check_problem,
        surface=surface,
        boundary=boundary,
        reports=reports,
        warnings=warnings,
        timings=timings,
        lsmc=lsmc_result,
    )

    directory = out_dir or cfg.output.directory
    if directory:
        with timed("export"):
            artifacts.files = export_artifacts(artifacts, directory, bundles)
    return artifacts


def _run_check(name, problem, surface, boundary, solve_surface, couplings,
               lsmc_result, sim_cfg, cfg) -> CheckReport:
    spec = problem.spec
    grid = surface.grid
    if name == "reward_x_monotone":
        return checkmod.check_reward_monotone_in_state(spec.terminal_reward, grid)
    if name == "drift_time_monotone_everywhere":
        return checkmod.check_drift_time_monotone(spec.drift, grid, scope=checkmod.EVERYWHERE)
    if name == "drift_time_monotone_where_drift_negative":
        return checkmod.check_drift_time_monotone(spec.drift, grid,
                                                  scope=checkmod.WHERE_DRIFT_NEGATIVE)
    if name == "drift_curvature_balance":
        return checkmod.check_drift_curvature_balance(surface)
    if name == "running_reward_monotone":
        if spec.running_reward is None:
            from .reports import INCONCLUSIVE

            return CheckReport("running_reward_monotone", INCONCLUSIVE, 0.0, None, 0.0,
                               "problem has no running reward")
        return checkmod.check_running_reward_monotone(spec.running_reward, grid)
    if name == "value_time_monotone":
        return checkmod.check_value_time_monotone(surface)
    if name == "boundary_monotone":
        return checkmod.check_boundary_monotone(boundary)
    if name == "residual_complementarity":
        # the discrete system was assembled in the solve frame
        return residual_complementarity(solve_surface)
    if name == "value_continuity":
        return checkmod.check_value_continuity(surface)
    if name == "coupling_order":
        if not couplings:
            from .reports import INCONCLUSIVE

            return CheckReport("coupling_order", INCONCLUSIVE, 0.0, None, 0.0,
                               "no couplings configured")
        reports = [comparison_report(cb, c_ord=sim_cfg.c_ord) for cb in couplings]
        worst = max(reports, key=lambda r: r.worst_violation - r.tolerance)
        verdict = PASS if all(r.verdict == PASS for r in reports) else FAIL
        notes = "; ".join(
            f"(u={u}, t={t}, x={x}): {r.verdict} worst={r.worst_violation:.3g}"
            for (u, t, x), r in zip(sim_cfg.couplings, reports)
        )
        return CheckReport("coupling_order", verdict, worst.worst_violation,
                           worst.witness, worst.tolerance, notes)
    if name == "lsmc_cross_check":
        if lsmc_result is None:
            from .reports import INCONCLUSIVE

            return CheckReport("lsmc_cross_check", INCONCLUSIVE, 0.0, None, 0.0,
                               "lsmc not configured")
        x0 = sim_cfg.lsmc_x if sim_cfg.lsmc_x is not None else (
            cfg.grid.x_ref if cfg.grid.x_ref is not None else 0.0
        )
        fd_value = value_at(surface, sim_cfg.lsmc_t, x0)
        gap = abs(fd_value - lsmc_result.estimate)
        tol = max(3.0 * lsmc_result.standard_error, 5e-3)
        return CheckReport(
            "lsmc_cross_check",
            PASS if gap <= tol else FAIL,
            gap,
            (sim_cfg.lsmc_t, x0),
            tol,
            f"fd={fd_value:.6g}, lsmc={lsmc_result.estimate:.6g} "
            f"(se={lsmc_result.standard_error:.2g})",
        )
    raise ValueError(f"unknown check name {name!r}")


# ---------------------------------------------------------------------------
# exports


def _fmt_float(v: float) -> str:
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def export_surface(surface: ValueSurface, boundary: Boundary, directory: str) -> dict[str, str]:
    """Write the surface and boundary CSVs; returns the file paths.

    Surface rows are row-major by t then x with 17-significant-digit floats;
    boundary sentinels are the literal strings -inf / +inf.
    """
    os.makedirs(directory, exist_ok=True)
    paths = {}

    surface_path = os.path.join(directory, "surface.csv")
    with open(surface_path, "w", encoding="utf-8") as fh:
        fh.write("t,x,v,g,exercise\n")
        ts, xs = surface.grid.t_nodes, surface.grid.x_nodes
        for k in range(len(ts)):
            for j in range(len(xs)):
                fh.write(
                    f"{_fmt_float(ts[k])},{_fmt_float(xs[j])},"
                    f"{_fmt_float(surface.v[k, j])},{_fmt_float(surface.obstacle[k, j])},"
                    f"{int(surface.exercise_mask[k, j])}\n"
                )
    paths["surface"] = surface_path

    boundary_path = os.path.join(directory, "boundary.csv")
    with open(boundary_path, "w", encoding="utf-8") as fh:
        fh.write("t,b\n")
        for t, b in zip(boundary.t_nodes, boundary.values):
            fh.write(f"{_fmt_float(t)},{_fmt_float(b)}\n")
    paths["boundary"] = boundary_path
    return paths


def export_paths_csv(bundle, directory: str) -> str:
    path = os.path.join(directory, "paths.csv")
    times = bundle.times()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("path,step,time,state\n")
        for i in range(bundle.n_paths):
            row = bundle.states[i]
            for k in range(bundle.n_steps + 1):
                fh.write(f"{i},{k},{_fmt_float(times[k])},{_fmt_float(row[k])}\n")
    return path


def export_artifacts(artifacts: RunArtifacts, directory: str, bundles=None) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    files = export_surface(artifacts.surface, artifacts.boundary, directory)

    report_doc = {
        "run_id": artifacts.run_id,
        "config_digest": hashlib.sha256(save_config_text(artifacts.config).encode()).hexdigest(),
        "checks": [r.to_dict() for r in artifacts.reports],
        "timings": {k: round(v, 6) for k, v in artifacts.timings.items()},
    }
    reports_path = os.path.join(directory, "reports.json")
    with open(reports_path, "w", encoding="utf-8") as fh:
        json.dump(report_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files["reports"] = reports_path

    summary_path = os.path.join(directory, "summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(summary_text(artifacts))
    files["summary"] = summary_path

    config_path = os.path.join(directory, "config.cfg")
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(save_config_text(artifacts.config))
    files["config"] = config_path

    if bundles:
        for bundle in bundles.values():
            files["paths"] = export_paths_csv(bundle, directory)
    return files


def summary_text(artifacts: RunArtifacts) -> str:
    lines = [
        f"run {artifacts.config.name}  (id {artifacts.run_id})",
        f"grid: {artifacts.surface.grid.nt}x{artifacts.surface.grid.nx}, "
        f"theta={artifacts.surface.meta.theta}, "
        f"psor worst residual {artifacts.surface.meta.psor_worst_residual:.3g}",
    ]
    for w in artifacts.warnings:
        lines.append(f"warning: {w}")
    finite = np.isfinite(artifacts.boundary.values)
    if finite.any():
        lines.append(
            f"boundary: {int(finite.sum())} finite nodes in "
            f"[{np.min(artifacts.boundary.values[finite]):.6g}, "
            f"{np.max(artifacts.boundary.values[finite]):.6g}]"
        )
    else:
        lines.append("boundary: no finite nodes (single-region surface)")
    if artifacts.boundary.non_separated:
        lines.append(
            f"warning: {len(artifacts.boundary.non_separated)} time slices are not "
            "separated into stop-below / continue-above"
        )
    if artifacts.lsmc is not None:
        lines.append(
            f"lsmc: {artifacts.lsmc.estimate:.6g} +- {artifacts.lsmc.standard_error:.2g}"
        )
    for r in artifacts.reports:
        lines.append(f"check {r.check_name}: {r.verdict} "
                     f"(worst {r.worst_violation:.3g}, tol {r.tolerance:.3g})")
    lines.append("timings: " + ", ".join(f"{k}={v:.3f}s" for k, v in artifacts.timings.items()))
    return "\n".join(lines) + "\n"
