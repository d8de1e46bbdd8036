"""Grid-sampled checks of monotonicity hypotheses and solved-surface conclusions.

All verdicts are "at grid scale": the coefficient fields are black-box
evaluators, so hypotheses are sampled on probe pairs, never proved, and the
conclusion tolerances are tied to the solver tolerances so that a true
conclusion does not fail on discretization noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField
from .grids import Grid
from .reports import CheckReport, FAIL, INCONCLUSIVE, PASS
from .solver import Boundary, NEG_INF, POS_INF, ValueSurface
from .problems import Orientation

TOL_ZERO = 1e-12  # strictness threshold defining the negative-drift region

EVERYWHERE = "everywhere"
WHERE_DRIFT_NEGATIVE = "where_drift_negative"


FD_NOISE_FLOOR = 5e-6  # relative noise of finite-difference second derivatives


def _mono_tol(values: np.ndarray, field: ScalarField | None = None) -> float:
    rel = 1e-12
    if field is not None and field.regularity_note == "fd_generator":
        rel = FD_NOISE_FLOOR
    return rel * (1.0 + float(np.max(np.abs(values))))


def _field_rows(field: ScalarField, grid: Grid) -> np.ndarray:
    if field.time_independent:
        row = field.row(grid.t_nodes[0], grid.x_nodes)
        return np.tile(row, (len(grid.t_nodes), 1))
    return np.stack([field.row(t, grid.x_nodes) for t in grid.t_nodes])


def check_reward_monotone_in_state(g: ScalarField, grid: Grid) -> CheckReport:
    """Is the reward nondecreasing in the state at every probed time?"""
    rows = _field_rows(g, grid)
    tol = _mono_tol(rows, g)
    drops = rows[:, :-1] - rows[:, 1:]  # positive where the reward decreases
    worst = float(np.max(drops))
    if worst <= tol:
        return CheckReport("reward_x_monotone", PASS, worst, None, tol,
                           "reward nondecreasing in x on all probe pairs")
    k, j = np.argwhere(drops > tol)[0]
    witness = (float(grid.t_nodes[k]), float(grid.x_nodes[j]))
    return CheckReport("reward_x_monotone", FAIL, worst, witness, tol,
                       f"reward decreases between x={grid.x_nodes[j]} and x={grid.x_nodes[j + 1]}")


def check_drift_time_monotone(mu: ScalarField, grid: Grid,
                              scope: str = EVERYWHERE,
                              tol_zero: float = TOL_ZERO) -> CheckReport:
    """Is the drift nonincreasing in time, everywhere or on its negative region?

    In the region scope a pair (t_k, t_{k+1}) at fixed x counts only when the
    later point has strictly negative drift, matching a hypothesis quantified
    over the negative-drift region; the check is consecutive-pair, hence at
    grid scale only.
    """
    if scope not in (EVERYWHERE, WHERE_DRIFT_NEGATIVE):
        raise ValueError(f"unknown scope {scope!r}")
    rows = np.stack([mu.row(t, grid.x_nodes) for t in grid.t_nodes])
    tol = _mono_tol(rows, mu)
    rises = rows[1:, :] - rows[:-1, :]  # positive where drift increases with t
    if scope == WHERE_DRIFT_NEGATIVE:
        in_region = rows[1:, :] < -tol_zero  # later point must be in the region
        rises = np.where(in_region, rises, -np.inf)
        if not in_region.any():
            return CheckReport(f"drift_time_monotone_{scope}", INCONCLUSIVE, 0.0, None, tol,
                               "negative-drift region is empty on the probe grid")
    worst = float(np.max(rises))
    name = f"drift_time_monotone_{scope}"
    if worst <= tol:
        return CheckReport(name, PASS, worst, None, tol,
                           f"drift nonincreasing in t ({scope}) on all probe pairs")
    k, j = np.argwhere(rises > tol)[0]
    witness = (float(grid.t_nodes[k + 1]), float(grid.x_nodes[j]))
    return CheckReport(name, FAIL, worst, witness, tol,
                       f"drift increases between t={grid.t_nodes[k]} and t={grid.t_nodes[k + 1]}")


def check_running_reward_monotone(h: ScalarField, grid: Grid) -> CheckReport:
    """Nondecreasing in x and nonincreasing in t, as two sub-verdicts."""
    x_part = check_reward_monotone_in_state(h, grid)
    t_part = check_drift_time_monotone(h, grid, scope=EVERYWHERE)
    both_ok = x_part.verdict == PASS and t_part.verdict == PASS
    if x_part.worst_violation >= t_part.worst_violation:
        worst, witness, tol = x_part.worst_violation, x_part.witness, x_part.tolerance
    else:
        worst, witness, tol = t_part.worst_violation, t_part.witness, t_part.tolerance
    return CheckReport(
        "running_reward_monotone",
        PASS if both_ok else FAIL,
        worst,
        witness,
        tol,
        f"x-monotone: {x_part.verdict}, t-monotone: {t_part.verdict}",
    )


@dataclass(frozen=True)
class RegionMasks:
    """Node classification of a solved surface.

    continuation/stopping partition the nodes, as do negative_drift and its
    complement (drift >= 0 up to the zero threshold).
    """

    continuation: np.ndarray
    stopping: np.ndarray
    negative_drift: np.ndarray
    nonnegative_drift: np.ndarray


def classify_regions(surface: ValueSurface, drift: ScalarField | None = None,
                     tol_zero: float = TOL_ZERO) -> RegionMasks:
    if drift is None:
        drift = surface.problem.spec.drift
    grid = surface.grid
    mu = np.stack([drift.row(t, grid.x_nodes) for t in grid.t_nodes])
    negative = mu < -tol_zero
    stopping = surface.exercise_mask
    return RegionMasks(
        continuation=~stopping,
        stopping=stopping,
        negative_drift=negative,
        nonnegative_drift=~negative,
    )


def _near_mask_transition(mask: np.ndarray) -> np.ndarray:
    """Nodes within one cell (in t or x) of an exercise-mask transition."""
    near = np.zeros_like(mask, dtype=bool)
    flip_x = mask[:, 1:] != mask[:, :-1]
    near[:, 1:] |= flip_x
    near[:, :-1] |= flip_x
    flip_t = mask[1:, :] != mask[:-1, :]
    near[1:, :] |= flip_t
    near[:-1, :] |= flip_t
    return near


def check_drift_curvature_balance(surface: ValueSurface,
                                  drift: ScalarField | None = None,
                                  diffusion: ScalarField | None = None) -> CheckReport:
    """On continuation nodes with nonnegative drift, does
    sigma^2 * v_xx + 2 * mu * v_x stay nonnegative?

    Uses central differences on interior nodes; nodes within one cell of a
    mask transition are excluded because the obstacle kink pollutes the
    discrete second derivative there.  Convexity of the value in x makes the
    condition automatic wherever the value is also nondecreasing in x.
    """
    spec = surface.problem.spec
    if drift is None:
        drift = spec.drift
    if diffusion is None:
        diffusion = spec.diffusion
    grid = surface.grid
    xs = grid.x_nodes
    dx = grid.dx
    v = surface.v

    masks = classify_regions(surface, drift)
    eligible = masks.continuation & masks.nonnegative_drift
    eligible &= ~_near_mask_transition(surface.exercise_mask)
    eligible[:, 0] = eligible[:, -1] = False  # need both x-neighbours
    if not eligible.any():
        return CheckReport("drift_curvature_balance", INCONCLUSIVE, 0.0, None, 0.0,
                           "no continuation nodes with nonnegative drift to probe")

    sig = diffusion.row(0.0, xs)
    sig2 = sig * sig
    vx = np.empty_like(v)
    vxx = np.empty_like(v)
    vx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * dx)
    vxx[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / (dx * dx)
    vx[:, 0] = vx[:, -1] = 0.0
    vxx[:, 0] = vxx[:, -1] = 0.0
    mu = np.stack([drift.row(t, xs) for t in grid.t_nodes])
    quantity = sig2 * vxx + 2.0 * mu * vx

    scale = max(
        1.0,
        float(np.max(np.abs(sig2 * vxx)[eligible])),
        float(np.max(np.abs(2.0 * mu * vx)[eligible])),
    )
    tol = 10.0 * dx * scale
    deficit = np.where(eligible, -quantity, -np.inf)
    worst = float(np.max(deficit))
    if worst <= tol:
        return CheckReport("drift_curvature_balance", PASS, worst, None, tol,
                           f"{int(eligible.sum())} nodes probed")
    k, j = np.argwhere(deficit > tol)[0]
    witness = (float(grid.t_nodes[k]), float(xs[j]))
    return CheckReport("drift_curvature_balance", FAIL, worst, witness, tol,
                       f"curvature-drift balance negative at {int((deficit > tol).sum())} nodes")


EDGE_BAND_SCALES = 1.0   # excluded band width next to each edge, in sigma*sqrt(T)


def _edge_band_columns(surface: ValueSurface) -> int:
    """Columns per side dominated by Dirichlet edge-clamp error.

    Where the true solution continues past a clamped edge, the clamp error
    diffuses inward over one diffusion scale; observed violation depths on
    bridge-type problems stay within ~0.6 scales of the edge.
    """
    grid = surface.grid
    xs = grid.x_nodes
    mid = xs[len(xs) // 4: 3 * len(xs) // 4]
    sig = surface.problem.spec.diffusion.row(0.0, mid)
    scale = float(np.max(np.abs(sig))) * np.sqrt(max(grid.horizon_end, grid.dt))
    cols = int(np.ceil(EDGE_BAND_SCALES * scale / grid.dx))
    return min(max(cols, 1), max(1, grid.nx // 5))


def check_value_time_monotone(surface: ValueSurface) -> CheckReport:
    """Is the solved value nonincreasing in time at every probed node?

    A band of columns next to each spatial edge (one diffusion scale per
    side, capped at 20% of the columns) is excluded: the Dirichlet edge pins
    the value to the obstacle there, and where the true solution continues
    past the edge that clamp error grows with time-to-go, faking a rise in t
    that says nothing about the problem being checked.
    """
    v = surface.v
    tol = 10.0 * surface.tol_contact
    skip = _edge_band_columns(surface)
    band = slice(skip, v.shape[1] - skip)
    rises = v[1:, band] - v[:-1, band]
    worst = float(np.max(rises))
    notes_suffix = f" ({skip} edge columns excluded per side)"
    if worst <= tol:
        return CheckReport("value_time_monotone", PASS, worst, None, tol,
                           "value nonincreasing in t at every probed node" + notes_suffix)
    k, j = np.argwhere(rises > tol)[0]
    witness = (float(surface.grid.t_nodes[k + 1]), float(surface.grid.x_nodes[j + skip]))
    return CheckReport("value_time_monotone", FAIL, worst, witness, tol,
                       f"value increases in t at {int((rises > tol).sum())} nodes" + notes_suffix)


def _sentinel_rank(b: float) -> int:
    if b == NEG_INF:
        return -1
    if b == POS_INF:
        return 1
    return 0


def check_boundary_monotone(boundary: Boundary) -> CheckReport:
    """Is the boundary monotone in the direction its orientation implies?

    Lower boundaries must be nondecreasing, upper boundaries nonincreasing,
    both with one-cell slack on finite pairs.  Sentinel transitions must
    respect the same order (e.g. all-continuation before finite before
    all-stopping for the lower case).
    """
    b = boundary.values
    ts = boundary.t_nodes
    dx = boundary.cell_size
    lower = boundary.orientation is Orientation.LOWER
    sign = 1.0 if lower else -1.0
    worst = -np.inf
    witness = None
    notes = "nondecreasing" if lower else "nonincreasing"
    for k in range(len(b) - 1):
        a, c = sign * b[k], sign * b[k + 1]
        ra, rc = _sentinel_rank(a), _sentinel_rank(c)
        if ra == 0 and rc == 0:
            drop = a - c  # positive where the boundary moves the wrong way
            if drop > worst:
                worst = drop
                if drop > dx:
                    witness = witness or (float(ts[k + 1]), float(b[k + 1]))
        elif rc < ra:
            return CheckReport(
                "boundary_monotone", FAIL, float("inf"),
                (float(ts[k + 1]), float(b[k + 1])), dx,
                f"sentinel order violated between steps {k} and {k + 1}",
            )
    if worst == -np.inf:
        return CheckReport("boundary_monotone", PASS, 0.0, None, dx,
                           f"no finite pairs; sentinel order consistent ({notes})")
    if worst <= dx:
        return CheckReport("boundary_monotone", PASS, float(worst), None, dx,
                           f"boundary {notes} within one cell")
    return CheckReport("boundary_monotone", FAIL, float(worst), witness, dx,
                       f"boundary violates {notes} beyond one cell")


def check_value_continuity(surface: ValueSurface) -> CheckReport:
    """Heuristic a posteriori continuity scan of the solved surface.

    Flags isolated jumps between neighbours that are out of scale with the
    surface's total variation; a smooth surface has max jump comparable to
    range * cell / extent.  The Dirichlet edge bands are excluded like in
    the time-monotonicity check: the clamp manufactures a jump wherever the
    true solution continues past the edge.
    """
    grid = surface.grid
    skip = _edge_band_columns(surface)
    cols = slice(skip, surface.v.shape[1] - skip)
    v = surface.v[:, cols]
    jump_x = float(np.max(np.abs(np.diff(v, axis=1)))) if v.shape[1] > 1 else 0.0
    # a time jump is only suspicious beyond what local transport moves in one
    # step; near a drift pole the per-step displacement spans many cells
    if v.shape[0] > 1:
        xs_band = grid.x_nodes[cols]
        mu = np.stack([surface.problem.spec.drift.row(t, xs_band)
                       for t in grid.t_nodes[:-1]])
        courant = np.abs(mu) * grid.dt / grid.dx
        jump_t = float(np.max(np.abs(np.diff(surface.v[:, cols], axis=0)) / (1.0 + courant)))
    else:
        jump_t = 0.0
    worst = max(jump_x, jump_t)
    vrange = float(np.max(v) - np.min(v))
    if vrange == 0.0:
        return CheckReport("value_continuity", PASS, 0.0, None, 0.0, "flat surface")
    x_extent = float(grid.x_nodes[-1] - grid.x_nodes[0])
    t_extent = max(float(grid.t_nodes[-1] - grid.t_nodes[0]), grid.dt)
    tol = 50.0 * vrange * max(grid.dx / x_extent, grid.dt / t_extent)
    verdict = PASS if worst <= tol else FAIL
    return CheckReport("value_continuity", verdict, worst, None, tol,
                       f"max neighbour jump vs 50x the smooth-surface scale {tol:.3g}")
