"""Uniform space-time grids shared by the solver and the checkers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, T_eff] x [x_min, x_max].

    ``T_eff`` is the horizon shaved by a small pole offset when the drift
    blows up at the horizon (e.g. bridge-type drifts), else the horizon
    itself.
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray

    def __post_init__(self):
        if len(self.t_nodes) < 3 or len(self.x_nodes) < 3:
            raise GridError("grid needs at least 2 intervals in each direction")
        if not (self.x_nodes[0] < self.x_nodes[-1]):
            raise GridError("degenerate x-range")

    @property
    def nt(self) -> int:
        return len(self.t_nodes) - 1

    @property
    def nx(self) -> int:
        return len(self.x_nodes) - 1

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def horizon_end(self) -> float:
        return float(self.t_nodes[-1])


def make_grid(t_end: float, x_min: float, x_max: float, nt: int, nx: int) -> Grid:
    if nt < 2 or nx < 2:
        raise GridError(f"need nt, nx >= 2, got nt={nt}, nx={nx}")
    return Grid(
        t_nodes=np.linspace(0.0, float(t_end), nt + 1),
        x_nodes=np.linspace(float(x_min), float(x_max), nx + 1),
    )


def pole_offset(horizon: float, nt: int) -> float:
    """Gap left between the grid end and a drift pole at the horizon."""
    return max(horizon / nt, 1e-6 * horizon)
