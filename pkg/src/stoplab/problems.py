"""Stopping-problem definition, validation, reflection and reward reduction."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .fields import ScalarField, constant_field, from_callable
from .grids import Grid


class StateSpace(enum.Enum):
    REAL_LINE = "real_line"
    POSITIVE_HALF_LINE = "positive_half_line"


class Orientation(enum.Enum):
    LOWER = "lower_boundary"
    UPPER = "upper_boundary"


class ValidationError(ValueError):
    pass


class OrientationError(ValueError):
    pass


class ReductionError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Full description of one optimal stopping problem.

    The diffusion coefficient must depend on x only (its evaluator ignores
    t by contract).  ``pole_at_horizon`` marks drifts that blow up as
    t approaches the horizon, e.g. bridge pulls; grids and simulations then
    stop a small offset before the horizon.
    """

    drift: ScalarField
    diffusion: ScalarField
    terminal_reward: ScalarField
    horizon: float
    running_reward: Optional[ScalarField] = None
    state_space: StateSpace = StateSpace.REAL_LINE
    orientation: Orientation = Orientation.LOWER
    pole_at_horizon: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValidationError(f"horizon must be finite and positive, got {self.horizon}")


@dataclass(frozen=True)
class ValidatedProblem:
    """A problem spec plus sampled regularity diagnostics."""

    spec: ProblemSpec
    lipschitz_estimate: float
    warnings: tuple[str, ...]


def _first_bad_point(values: np.ndarray, ts: np.ndarray, xs: np.ndarray):
    bad = ~np.isfinite(values)
    k, j = np.argwhere(bad)[0]
    return float(ts[k]), float(xs[j])


def validate_problem(spec: ProblemSpec, probe_grid: Grid) -> ValidatedProblem:
    """Probe the coefficient fields on a grid and estimate drift regularity.

    Returns a sampled Lipschitz estimate for x -> drift(t, x) (the sup over
    consecutive probe pairs of |difference| / dx) and accumulates warnings;
    non-finite evaluations and a negative diffusion are hard errors.
    """
    ts, xs = probe_grid.t_nodes, probe_grid.x_nodes
    warnings: list[str] = []

    mu = np.stack([spec.drift.row(t, xs) for t in ts])
    if not np.isfinite(mu).all():
        t_bad, x_bad = _first_bad_point(mu, ts, xs)
        raise ValidationError(f"drift is not finite at probe point (t={t_bad}, x={x_bad})")

    sig = spec.diffusion.row(0.0, xs)
    if not np.isfinite(sig).all():
        j = int(np.flatnonzero(~np.isfinite(sig))[0])
        raise ValidationError(f"diffusion is not finite at probe point x={xs[j]}")
    if (sig < 0).any():
        j = int(np.flatnonzero(sig < 0)[0])
        raise ValidationError(f"diffusion is negative at probe point x={xs[j]}")
    if (sig <= 0).any():
        warnings.append("diffusion vanishes somewhere on the probe grid")

    g = np.stack([spec.terminal_reward.row(t, xs) for t in ts])
    if not np.isfinite(g).all():
        t_bad, x_bad = _first_bad_point(g, ts, xs)
        raise ValidationError(f"terminal reward is not finite at probe point (t={t_bad}, x={x_bad})")
    if spec.running_reward is not None:
        f = np.stack([spec.running_reward.row(t, xs) for t in ts])
        if not np.isfinite(f).all():
            t_bad, x_bad = _first_bad_point(f, ts, xs)
            raise ValidationError(f"running reward is not finite at probe point (t={t_bad}, x={x_bad})")

    dx = probe_grid.dx
    lip = float(np.max(np.abs(np.diff(mu, axis=1))) / dx) if mu.shape[1] > 1 else 0.0
    if not np.isfinite(lip):
        raise ValidationError("drift Lipschitz estimate is not finite on the probe grid")

    first_row = float(np.max(np.abs(mu[0])))
    last_row = float(np.max(np.abs(mu[-1])))
    if spec.pole_at_horizon or (last_row > 10.0 and last_row > 50.0 * max(first_row, 1e-12)):
        warnings.append("drift magnitude grows unboundedly as t -> T")

    return ValidatedProblem(spec=spec, lipschitz_estimate=lip, warnings=tuple(warnings))


def flip_orientation(spec: ProblemSpec) -> ProblemSpec:
    """Reflect the state axis, swapping upper- and lower-boundary problems.

    The reflected problem has drift -mu(t, -x), diffusion sigma(-x) and
    rewards evaluated at -x; solving it and negating the boundary recovers
    the original one.  Applying the reflection twice is the identity on
    evaluator values.
    """
    if spec.state_space is not StateSpace.REAL_LINE:
        raise OrientationError("orientation can only be flipped on the real line")

    mu, sig, g, f = spec.drift, spec.diffusion, spec.terminal_reward, spec.running_reward

    def wrap_neg(field):  # h~(t, x) = -h(t, -x)
        if field is None:
            return None
        return lambda t, x: -field(t, -np.asarray(x, dtype=float))

    def wrap_ref(field):  # h~(t, x) = h(t, -x)
        if field is None:
            return None
        return lambda t, x: field(t, -np.asarray(x, dtype=float))

    new_drift = from_callable(
        wrap_neg(mu.evaluator),
        source=f"reflected({mu.source})",
        time_independent=mu.time_independent,
        partial_t=wrap_neg(mu.partial_t) if mu.partial_t else None,
        partial_x=wrap_ref(mu.partial_x) if mu.partial_x else None,
        regularity_note=mu.regularity_note,
    )
    new_sigma = from_callable(
        wrap_ref(sig.evaluator),
        source=f"reflected({sig.source})",
        time_independent=True,
        regularity_note=sig.regularity_note,
    )

    def wrap_reward(field):
        if field is None:
            return None
        return from_callable(
            wrap_ref(field.evaluator),
            source=f"reflected({field.source})",
            time_independent=field.time_independent,
            partial_t=wrap_ref(field.partial_t) if field.partial_t else None,
            partial_x=wrap_neg(field.partial_x) if field.partial_x else None,
            partial_xx=wrap_ref(field.partial_xx) if field.partial_xx else None,
        )

    return replace(
        spec,
        drift=new_drift,
        diffusion=new_sigma,
        terminal_reward=wrap_reward(g),
        running_reward=wrap_reward(f),
        orientation=(
            Orientation.LOWER if spec.orientation is Orientation.UPPER else Orientation.UPPER
        ),
    )


def _reduction_probe_points(spec: ProblemSpec):
    t_hi = spec.horizon * (0.999 if spec.pole_at_horizon else 1.0)
    ts = (0.0, 0.5 * t_hi, t_hi)
    if spec.state_space is StateSpace.POSITIVE_HALF_LINE:
        xs = (0.5, 1.0, 2.0)
    else:
        xs = (-1.0, 0.0, 1.0)
    return ts, xs


def reduce_to_running_reward(spec: ProblemSpec) -> ProblemSpec:
    """Rewrite a terminal-reward problem in pure running-reward form.

    The new running reward is f + (d/dt + mu d/dx + sigma^2/2 d/dx2) applied
    to the terminal reward; the new terminal reward is zero.  The value of
    the reduced problem equals the original value minus the terminal reward,
    pointwise, up to solver tolerance.  The terminal reward must be smooth
    enough for its declared (or finite-difference) partials to make sense.
    """
    g = spec.terminal_reward
    mu = spec.drift
    sig = spec.diffusion
    f = spec.running_reward

    def h_eval(t, x):
        s = sig(0.0, x)
        out = g.dt(t, x) + mu(t, x) * g.dx(t, x) + 0.5 * s * s * g.dxx(t, x)
        if f is not None:
            out = out + f(t, x)
        return out

    fd_based = g.partial_t is None or g.partial_x is None or g.partial_xx is None
    h = from_callable(
        h_eval,
        source=f"generator_of({g.source})" if g.source else "generator_reduced",
        # FD second derivatives carry an eps/step^2 noise floor (~1e-6 of the
        # reward scale); monotonicity checks must not resolve below it
        regularity_note="fd_generator" if fd_based else "",
    )

    ts, xs = _reduction_probe_points(spec)
    for t in ts:
        for x in xs:
            try:
                val = h_eval(t, x)
            except Exception as err:
                raise ReductionError(
                    f"reduced running reward failed at probe point (t={t}, x={x}): {err}"
                ) from err
            if not np.all(np.isfinite(val)):
                raise ReductionError(
                    f"reduced running reward is not finite at probe point (t={t}, x={x})"
                )

    return replace(spec, terminal_reward=constant_field(0.0), running_reward=h)
