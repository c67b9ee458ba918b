"""Staggered polar grid on the unit disc.

Radial nodes sit at r_j = (j - 1/2) h_r for j = 1..n_r with h_r = 1/(n_r - 1/2),
so the outermost node lands exactly on r = 1 (the Dirichlet ring) and no node
sits on the coordinate singularity at r = 0.  Angular nodes are uniform,
theta_i = i h_theta with h_theta = 2 pi / n_theta, periodic.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PolarGrid:
    """Node layout shared by the solver, the rasterizer and the sensors."""

    n_r: int
    n_theta: int

    def __post_init__(self) -> None:
        if self.n_r < 3:
            raise ValueError(f"n_r must be >= 3, got {self.n_r}")
        if self.n_theta < 4:
            raise ValueError(f"n_theta must be >= 4, got {self.n_theta}")

    @property
    def h_r(self) -> float:
        return 1.0 / (self.n_r - 0.5)

    @property
    def h_theta(self) -> float:
        return TWO_PI / self.n_theta

    @cached_property
    def radii(self) -> np.ndarray:
        """Radial node positions; radii[-1] == 1.0 up to rounding."""
        return (np.arange(1, self.n_r + 1) - 0.5) * self.h_r

    @cached_property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.h_theta

    @property
    def n_interior(self) -> int:
        # unknowns exclude the Dirichlet ring
        return self.n_r - 1

    def sensor_angle(self, index: int) -> float:
        if not 0 <= index < self.n_theta:
            raise IndexError(f"sensor index {index} out of range [0, {self.n_theta})")
        return index * self.h_theta
