"""Source domain parameterizations and rasterization onto the polar grid.

Two shape families describe the unknown source support D inside the unit
disc.  A circle of fixed radius 0.2 whose center is parameterized by an
unconstrained 2-vector, and a star-shaped domain whose radial profile
q(theta) is a truncated Fourier series in an unconstrained (2M+1)-vector.
Both map R^p onto geometrically valid shapes so the sampler can work in an
unconstrained space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import TWO_PI, PolarGrid

CIRCLE_RADIUS = 0.2
Q_MIN = 0.01
Q_MAX = 0.99


class ShapeRejected(Exception):
    """Raised when a star profile leaves [Q_MIN, Q_MAX] at some grid angle.

    The sampler treats this as zero prior mass (misfit +inf), never as a
    clamped shape.
    """


def _require_finite(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError(f"parameter vector must be finite, got {xi}")
    return xi


@dataclass(frozen=True)
class CircleSource:
    """Disc of radius 0.2 centered at eta = (rho cos omega, rho sin omega)."""

    rho: float
    omega: float
    radius: float = CIRCLE_RADIUS

    @property
    def eta(self) -> tuple[float, float]:
        return (self.rho * np.cos(self.omega), self.rho * np.sin(self.omega))


def circle_from_unconstrained(xi) -> CircleSource:
    """Map an unconstrained 2-vector to a circle center.

    rho = arctan(xi1)/pi + 1/2 lies in (0,1); omega = 2 arctan(xi2) + pi lies
    in (0, 2 pi).  Both maps are strictly increasing bijections.
    """
    xi = _require_finite(xi)
    if xi.shape != (2,):
        raise ValueError(f"circle parameters must be a 2-vector, got shape {xi.shape}")
    rho = np.arctan(xi[0]) / np.pi + 0.5
    omega = 2.0 * np.arctan(xi[1]) + np.pi
    return CircleSource(rho=float(rho), omega=float(omega))


def unconstrained_from_circle(rho: float, omega: float) -> np.ndarray:
    """Inverse of circle_from_unconstrained, used by tests and diagnostics."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0,1), got {rho}")
    if not 0.0 < omega < TWO_PI:
        raise ValueError(f"omega must lie in (0, 2 pi), got {omega}")
    return np.array([np.tan(np.pi * (rho - 0.5)), np.tan((omega - np.pi) / 2.0)])


def star_radius(theta, xi) -> np.ndarray | float:
    """Radial profile q(theta; xi) of the star-shaped domain.

    q = xi1/2 + sum_{i=1..M} ( xi_{i+1} cos(i theta) + xi_{i+M+1} sin(i theta) )
    with M inferred from len(xi) = 2M + 1.
    """
    xi = _require_finite(xi)
    if xi.ndim != 1 or len(xi) < 3 or len(xi) % 2 == 0:
        raise ValueError(f"star parameters must have odd length >= 3, got {xi.shape}")
    m = (len(xi) - 1) // 2
    theta_arr = np.asarray(theta, dtype=float)
    q = 0.5 * xi[0] * np.ones_like(theta_arr)
    for i in range(1, m + 1):
        q = q + xi[i] * np.cos(i * theta_arr) + xi[i + m] * np.sin(i * theta_arr)
    return q if q.ndim else float(q)


@dataclass(frozen=True)
class StarSource:
    """Star-shaped domain r < q(theta; xi) with a 2M+1 Fourier parameterization."""

    xi: np.ndarray
    m: int = field(init=False)

    def __post_init__(self) -> None:
        xi = _require_finite(self.xi)
        if xi.ndim != 1 or len(xi) < 3 or len(xi) % 2 == 0:
            raise ValueError(f"star parameters must have odd length >= 3, got {xi.shape}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "m", (len(xi) - 1) // 2)

    def radius_at(self, theta) -> np.ndarray | float:
        return star_radius(theta, self.xi)

    def admissible_on(self, grid: PolarGrid) -> bool:
        """Whether q stays within [Q_MIN, Q_MAX] at every grid angle."""
        q = self.radius_at(grid.angles)
        return bool(np.all(q >= Q_MIN) and np.all(q <= Q_MAX))


SourceModel = CircleSource | StarSource


def rasterize(source: SourceModel, grid: PolarGrid) -> np.ndarray:
    """Indicator of D sampled at the grid's nodal points, shape (n_r, n_theta).

    Each cell is 1 iff its nodal point lies inside D; no sub-cell area
    fractions.  Raises ShapeRejected for an inadmissible star profile.
    """
    r = grid.radii[:, None]
    theta = grid.angles[None, :]
    if isinstance(source, CircleSource):
        ex, ey = source.eta
        x = r * np.cos(theta)
        y = r * np.sin(theta)
        inside = (x - ex) ** 2 + (y - ey) ** 2 < source.radius**2
    elif isinstance(source, StarSource):
        q = np.asarray(source.radius_at(grid.angles))
        if np.any(q < Q_MIN) or np.any(q > Q_MAX):
            raise ShapeRejected(
                f"star profile leaves [{Q_MIN}, {Q_MAX}]: range "
                f"[{q.min():.4g}, {q.max():.4g}]"
            )
        inside = r < q[None, :]
    else:
        raise TypeError(f"unsupported source model {type(source).__name__}")
    return inside.astype(float)
