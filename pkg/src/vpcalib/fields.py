"""Gridded 1D solution fields shared by the flow solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Grid1D


@dataclass(frozen=True)
class Solution1D:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.nodes.shape:
            raise ValueError("values must match the grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")

    def interp(self, x):
        return np.interp(x, self.grid.nodes, self.values)
