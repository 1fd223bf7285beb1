"""stowave v0.1 - Ball Averages

F_R(t) = ∫_{B_R} (u(t,x) - 1) dx on the torus grid.

Each node carries the cube of side h centred on it. Cubes entirely inside
B_R weigh h³, cubes entirely outside weigh 0, and the boundary shell is
resolved by 3×3×3 sub-cell sampling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .noise import TorusGrid
from .solver import FieldState

logger = logging.getLogger("stowave.averages")

_SUBSAMPLE = (-1.0 / 3.0, 0.0, 1.0 / 3.0)


class BallConfigError(Exception):
    """Raised when a ball does not fit on the torus."""
    pass


class GridMismatch(Exception):
    """Raised when a field and its weights live on different grids."""
    pass


@dataclass
class BallWeights:
    grid: TorusGrid
    R: float
    weights: np.ndarray
    center: tuple[int, int, int] = (0, 0, 0)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @property
    def exact_volume(self) -> float:
        return 4.0 * math.pi * self.R ** 3 / 3.0

    def shifted(self, offset: tuple[int, int, int]) -> BallWeights:
        """Same ball recentred `offset` nodes away (periodically)."""
        center = tuple((c + o) % self.grid.N for c, o in zip(self.center, offset))
        return BallWeights(self.grid, self.R, np.roll(self.weights, offset, axis=(0, 1, 2)), center)

    def __str__(self):
        return f"Ball(R={self.R:g}, |B|≈{self.volume:.6g} on {self.grid})"


def ball_weights(grid: TorusGrid, R: float, T: float = 0.0) -> BallWeights:
    """Cell weights of B_R centred at the origin node.

    With T > 0 the light cone of the ball over [0, T] must also fit.
    """
    if not R > 0.0:
        raise BallConfigError(f"Ball radius must be positive, got R={R}")
    need = 2.0 * R + 2.0 * T + 4.0 * grid.h
    if need > grid.L:
        raise BallConfigError(f"B_R with R={R:g}, T={T:g} needs L ≥ {need:g}, torus has L={grid.L:g}")

    h = grid.h
    half_diag = 0.5 * math.sqrt(3.0) * h
    r = grid.radius_field()
    weights = np.where(r + half_diag <= R, grid.cell_volume, 0.0)

    boundary = np.nonzero((r + half_diag > R) & (r - half_diag < R))
    x = grid.centered_axis()
    bx, by, bz = x[boundary[0]], x[boundary[1]], x[boundary[2]]
    hits = np.zeros(bx.shape)
    for ox in _SUBSAMPLE:
        for oy in _SUBSAMPLE:
            for oz in _SUBSAMPLE:
                d2 = (bx + ox * h) ** 2 + (by + oy * h) ** 2 + (bz + oz * h) ** 2
                hits += d2 <= R * R
    weights[boundary] = hits / 27.0 * grid.cell_volume
    logger.debug(f"B_R R={R:g}: {boundary[0].size} boundary cells, volume {weights.sum():.6g}")
    return BallWeights(grid, float(R), weights)


def spatial_average(field: Union[FieldState, np.ndarray], w: BallWeights) -> float:
    """Σ_x w(x)·(u(x) - 1)."""
    if isinstance(field, FieldState):
        if field.grid != w.grid:
            raise GridMismatch(f"Field on {field.grid}, weights on {w.grid}")
        u = field.u
    else:
        u = np.asarray(field)
    if u.shape != w.weights.shape:
        raise GridMismatch(f"Field shape {u.shape} does not match weights {w.weights.shape}")
    return float(np.sum(w.weights * (u - 1.0)))
