"""Uniform periodic grid on the box [0, L)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    box_length: float = 10.0
    points: int = 64

    def __post_init__(self):
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")
        if self.points < 2:
            raise ValueError("grid needs at least two points")

    @property
    def step(self) -> float:
        return self.box_length / self.points

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.points) * self.step

    def wrap(self, x):
        """Map coordinates into [0, L)."""
        return np.mod(x, self.box_length)

    def min_image(self, dx):
        """Signed minimum-image displacement in [-L/2, L/2)."""
        L = self.box_length
        return np.mod(np.asarray(dx, dtype=float) + 0.5 * L, L) - 0.5 * L

    def index_of(self, x) -> np.ndarray:
        """Nearest grid index of each coordinate (periodic)."""
        return np.mod(np.rint(np.asarray(x, dtype=float) / self.step).astype(int), self.points)

    def displacement_matrix(self) -> np.ndarray:
        """D[i, j] = x_i - x_j, minimum image."""
        return self.min_image(self.x[:, None] - self.x[None, :])
