"""Euler-Maruyama path simulation, shared-noise couplings and an LSMC oracle.

Increments come from the counter-based Philox generator keyed by the master
seed; the (path, step) increment table is a pure function of
(seed, n_paths, n_steps), so identical seeds and parameters reproduce
bit-identical bundles regardless of how post-processing is parallelised.

Positive-half-line problems are simulated in log coordinates so paths stay
strictly positive.  Drifts with a pole at the horizon are simulated on a
grid that stops max(dt, 1e-6*T) before it; the terminal reward is then read
there, with an O(sqrt(gap)) horizon error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .problems import StateSpace, ValidatedProblem
from .reports import CheckReport, FAIL, PASS

EULER = "euler"
LOG_EULER = "log_euler"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathBundle:
    start_time: float
    start_state: float
    dt: float
    states: np.ndarray       # (n_paths, n_steps + 1)
    seed: int
    scheme: str
    poisoned: np.ndarray     # per-path flag: a non-finite state was hit

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class Region:
    """A time-space region given by a pure, vectorizable indicator."""

    indicator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    description: str = ""


@dataclass(frozen=True)
class CoupledBundle:
    """Two bundles driven by identical per-step Gaussian increments.

    ``region_exit`` is computed on the late bundle's time-space trajectory:
    for each path, the first step index at which (t + s, X) leaves the
    region (0 if it starts outside, n_steps if it never leaves).
    """

    late: PathBundle
    early: PathBundle
    region: Region
    region_exit: np.ndarray
    shared_increments: bool = True


def everywhere_region() -> Region:
    return Region(indicator=lambda t, x: np.ones(np.shape(x), dtype=bool),
                  description="everywhere")


def negative_drift_region(drift, tol_zero: float = 1e-12) -> Region:
    """The open region where the drift is strictly negative (below -tol_zero)."""
    return Region(
        indicator=lambda t, x: np.asarray(drift(t, x)) < -tol_zero,
        description="drift < 0",
    )


def _increments(seed: int, n_paths: int, n_steps: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.standard_normal((n_paths, n_steps))


def _sim_window(spec, t: float, n_steps: int):
    if spec.pole_at_horizon:
        # leave a gap max(dt, 1e-6*T) before the pole; with the dt-sized gap
        # the window solves to (T - t) / (n_steps + 1) exactly
        dt_guess = (spec.horizon - t) / (n_steps + 1)
        gap = max(dt_guess, 1e-6 * spec.horizon)
        dt = (spec.horizon - t - gap) / n_steps
    else:
        dt = (spec.horizon - t) / n_steps
    if not (dt > 0):
        raise SimulationError(
            f"start time {t} leaves no simulation window before the horizon {spec.horizon}"
        )
    return dt


def _run_euler(spec, t: float, x: float, z: np.ndarray, dt: float, scheme: str):
    n_paths, n_steps = z.shape
    states = np.empty((n_paths, n_steps + 1))
    states[:, 0] = x
    poisoned = np.zeros(n_paths, dtype=bool)
    sqdt = np.sqrt(dt)
    mu = spec.drift
    sigma = spec.diffusion

    if scheme == LOG_EULER:
        if x <= 0:
            raise SimulationError(f"log-space scheme needs a positive start state, got {x}")
        logx = np.full(n_paths, np.log(x))
    cur = states[:, 0].copy()
    for k in range(n_steps):
        tk = t + k * dt
        with np.errstate(all="ignore"):
            if scheme == LOG_EULER:
                s = np.asarray(sigma(0.0, cur), dtype=float)
                drift_term = np.asarray(mu(tk, cur), dtype=float) / cur - 0.5 * (s / cur) ** 2
                step = drift_term * dt + (s / cur) * sqdt * z[:, k]
                logx = np.where(poisoned, logx, logx + step)
                nxt = np.exp(logx)
            else:
                s = np.asarray(sigma(0.0, cur), dtype=float)
                nxt = cur + np.asarray(mu(tk, cur), dtype=float) * dt + s * sqdt * z[:, k]
        bad = ~np.isfinite(nxt)
        if bad.any():
            nxt = np.where(bad, cur, nxt)   # freeze poisoned paths at last good state
            poisoned |= bad
        nxt = np.where(poisoned, cur, nxt)
        states[:, k + 1] = nxt
        cur = nxt
    return states, poisoned


def simulate_paths(problem: ValidatedProblem, t: float, x: float, n_paths: int,
                   n_steps: int, seed: int, scheme: Optional[str] = None) -> PathBundle:
    """Simulate n_paths Euler paths of the problem's state process from (t, x)."""
    spec = problem.spec
    if n_steps < 1:
        raise SimulationError(f"need n_steps >= 1, got {n_steps}")
    if scheme is None:
        scheme = LOG_EULER if spec.state_space is StateSpace.POSITIVE_HALF_LINE else EULER
    dt = _sim_window(spec, t, n_steps)
    z = _increments(seed, n_paths, n_steps)
    states, poisoned = _run_euler(spec, t, x, z, dt, scheme)
    return PathBundle(start_time=t, start_state=x, dt=dt, states=states,
                      seed=seed, scheme=scheme, poisoned=poisoned)


def region_exit_time(path: np.ndarray, region: Region, t: float, dt: float) -> int:
    """First step index at which (t + k*dt, path[k]) leaves the region."""
    n_steps = len(path) - 1
    times = t + dt * np.arange(n_steps + 1)
    outside = ~np.asarray(region.indicator(times, path), dtype=bool)
    hits = np.nonzero(outside)[0]
    return int(hits[0]) if hits.size else n_steps


def simulate_coupled(problem: ValidatedProblem, t: float, u: float, x: float,
                     region: Region, n_paths: int, n_steps: int, seed: int) -> CoupledBundle:
    """Couple the processes started at times u <= t from the same state x.

    Both bundles take n_steps steps of the late start's step size and consume
    identical Gaussian increments path by path, step by step; the early
    bundle covers [u, u + n_steps*dt].  Exit indices are computed on the
    late bundle against the region.
    """
    spec = problem.spec
    if not (0.0 <= u <= t):
        raise SimulationError(f"need 0 <= u <= t, got u={u}, t={t}")
    dt = _sim_window(spec, t, n_steps)
    scheme = LOG_EULER if spec.state_space is StateSpace.POSITIVE_HALF_LINE else EULER
    z = _increments(seed, n_paths, n_steps)
    late_states, late_poisoned = _run_euler(spec, t, x, z, dt, scheme)
    early_states, early_poisoned = _run_euler(spec, u, x, z, dt, scheme)

    times = t + dt * np.arange(n_steps + 1)
    outside = np.empty((n_paths, n_steps + 1), dtype=bool)
    for k in range(n_steps + 1):
        outside[:, k] = ~np.asarray(
            region.indicator(times[k], late_states[:, k]), dtype=bool
        )
    any_exit = outside.any(axis=1)
    exit_idx = np.where(any_exit, outside.argmax(axis=1), n_steps)

    late = PathBundle(start_time=t, start_state=x, dt=dt, states=late_states,
                      seed=seed, scheme=scheme, poisoned=late_poisoned)
    early = PathBundle(start_time=u, start_state=x, dt=dt, states=early_states,
                       seed=seed, scheme=scheme, poisoned=early_poisoned)
    return CoupledBundle(late=late, early=early, region=region,
                         region_exit=exit_idx.astype(int))


def coupling_statistic(cb: CoupledBundle) -> tuple[np.ndarray, int, int]:
    """Per-step mean positive part of (late - early), frozen at region exit.

    Returns (per-step means, worst step, worst path at that step).
    """
    late, early = cb.late.states, cb.early.states
    n_paths, n1 = late.shape
    n_steps = n1 - 1
    rows = np.arange(n_paths)
    stats = np.empty(n_steps + 1)
    worst = (-1.0, 0, 0)
    for k in range(n_steps + 1):
        idx = np.minimum(k, cb.region_exit)
        diff = late[rows, idx] - early[rows, idx]
        pos = np.maximum(diff, 0.0)
        stats[k] = pos.mean()
        top = float(pos.max())
        if top > worst[0]:
            worst = (top, k, int(pos.argmax()))
    return stats, worst[1], worst[2]


def comparison_report(cb: CoupledBundle, c_ord: float = 1.0) -> CheckReport:
    """Check the pathwise ordering of the coupled bundles up to region exit.

    The continuous-time statement is exact; the discrete statistic is
    allowed a tolerance proportional to the step size (c_ord * dt, in state
    units per time unit), since Euler noise can break exact ordering when
    the diffusion coefficient is state-dependent.
    """
    if not cb.shared_increments:
        raise SimulationError("comparison_report needs a shared-increment coupling")
    stats, k_worst, path_worst = coupling_statistic(cb)
    worst = float(stats.max())
    tol = c_ord * cb.late.dt
    t_worst = cb.late.start_time + k_worst * cb.late.dt
    x_worst = float(cb.late.states[path_worst, min(k_worst, cb.region_exit[path_worst])])
    return CheckReport(
        check_name="coupling_order",
        verdict=PASS if worst <= tol else FAIL,
        worst_violation=worst,
        witness=(float(t_worst), x_worst),
        tolerance=tol,
        notes=(
            f"max over steps of mean positive part; worst path {path_worst} "
            f"at step {k_worst}; region: {cb.region.description or 'custom'}"
        ),
    )


@dataclass(frozen=True)
class LsmcValue:
    estimate: float
    standard_error: float
    n_paths: int
    warnings: tuple[str, ...] = ()


def value_lsmc(problem: ValidatedProblem, t: float, x: float, n_paths: int,
               n_steps: int, basis_degree: int, seed: int,
               bootstrap: int = 200) -> LsmcValue:
    """Least-squares Monte Carlo estimate of the stopping value at (t, x).

    Backward induction over the simulation grid with a polynomial regression
    basis fit on paths whose immediate reward is positive (all paths when too
    few are); the running reward is integrated by the left-endpoint rule.
    The standard error is a bootstrap over the realized per-path payoffs.
    A rank-deficient regression matrix reduces the degree with a warning.
    """
    spec = problem.spec
    bundle = simulate_paths(problem, t, x, n_paths, n_steps, seed)
    states = bundle.states
    times = bundle.times()
    dt = bundle.dt
    warnings: list[str] = []
    if bundle.poisoned.any():
        warnings.append(f"{int(bundle.poisoned.sum())} poisoned paths excluded from payoffs")

    g = spec.terminal_reward
    f = spec.running_reward

    def reward_at(k):
        return np.asarray(g(times[k], states[:, k]), dtype=float) + np.zeros(n_paths)

    if f is not None:
        frun = np.empty((n_paths, n_steps + 1))
        frun[:, 0] = 0.0
        acc = np.zeros(n_paths)
        for k in range(n_steps):
            acc = acc + np.asarray(f(times[k], states[:, k]), dtype=float) * dt
            frun[:, k + 1] = acc
    else:
        frun = None

    def total_if_stopped(k):
        tot = reward_at(k)
        if frun is not None:
            tot = tot + frun[:, k]
        return tot

    total = total_if_stopped(n_steps)
    degree = int(basis_degree)
    for k in range(n_steps - 1, 0, -1):
        exercise = total_if_stopped(k)
        xk = states[:, k]
        immediate = reward_at(k)
        candidates = np.nonzero(immediate > 0)[0]
        if candidates.size < max(30, 5 * (degree + 1)):
            candidates = np.arange(n_paths)
        # continuation payoff measured from time k
        future = total[candidates]
        if frun is not None:
            future = future - frun[candidates, k]
        z = xk[candidates]
        spread = z.std()
        z = (z - z.mean()) / (spread if spread > 0 else 1.0)
        basis = np.vander(z, degree + 1, increasing=True)
        coef, _, rank, _ = np.linalg.lstsq(basis, future, rcond=None)
        if rank < degree + 1 and degree > 1:
            degree -= 1
            warnings.append(
                f"regression matrix rank-deficient at step {k}; degree reduced to {degree}"
            )
            basis = basis[:, : degree + 1]
            coef, _, _, _ = np.linalg.lstsq(basis, future, rcond=None)
        continuation = basis @ coef
        if frun is not None:
            continuation = continuation + frun[candidates, k]
        stop = candidates[exercise[candidates] >= continuation]
        total[stop] = exercise[stop]

    keep = ~bundle.poisoned
    payoffs = total[keep]
    if payoffs.size == 0:
        raise SimulationError("all paths poisoned; no payoffs to average")
    mean = float(payoffs.mean())
    immediate0 = float(np.asarray(g(times[0], np.asarray(x, dtype=float)), dtype=float))
    estimate = max(immediate0, mean)

    boot_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB007])))
    idx = boot_gen.integers(0, payoffs.size, size=(bootstrap, payoffs.size))
    boot_means = payoffs[idx].mean(axis=1)
    se = float(boot_means.std(ddof=1))
    return LsmcValue(estimate=estimate, standard_error=se, n_paths=int(keep.sum()),
                     warnings=tuple(warnings))
