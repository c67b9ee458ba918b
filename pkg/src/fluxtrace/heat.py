"""Heat equation on the unit disc: backward-Euler time stepping on the polar
grid and boundary-flux extraction.

The PDE is u_t = (1/r)(r u_r)_r + (1/r^2) u_tt + b chi_D with homogeneous
Dirichlet data on r = 1.  The spatial operator is the conservative
second-order stencil; the staggered radial grid closes the pole flux
naturally (the r u_r flux vanishes at r = 0, no special pole node).

Two interchangeable backends solve the implicit step: a compiled kernel that
diagonalizes the angular coupling and sweeps per-mode tridiagonal systems,
and a pure-Python scipy sparse-LU fallback.  Selection happens per solver
instance; "auto" prefers the compiled kernel and falls back silently.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from ._heat_python import PythonBackend
from ._spectral import theta_eigenbasis, thomas_factors
from .grid import PolarGrid

BACKEND_ENV = "FLUXTRACE_BACKEND"
BACKENDS = ("auto", "compiled", "python")


class SolverDivergence(Exception):
    """Non-finite field after stepping; indicates a bug, not a physics event."""


@dataclass(frozen=True)
class HeatState:
    """Temperature field over the full grid (Dirichlet ring included) at time t."""

    u: np.ndarray
    t: float

    @staticmethod
    def zero(grid: PolarGrid, t: float = 0.0) -> "HeatState":
        return HeatState(u=np.zeros((grid.n_r, grid.n_theta)), t=t)


@dataclass(frozen=True)
class SolverConfig:
    """Step size and source strength for one evolution window."""

    dt: float
    b: float

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")


@dataclass(frozen=True)
class FluxRing:
    """Outward-normal boundary derivative at every angular node at time t."""

    values: np.ndarray
    t: float


def flux_at(ring: FluxRing, sensor_index: int) -> float:
    """Ring entry at one angular node; the sensor angle is index * h_theta."""
    n = len(ring.values)
    if not 0 <= sensor_index < n:
        raise IndexError(f"sensor index {sensor_index} out of range [0, {n})")
    return float(ring.values[sensor_index])


class CompiledBackend:
    """Mode-space window integrator driving the Cython sweep kernel."""

    name = "compiled"

    def __init__(self, grid: PolarGrid):
        from . import _heat_kernel

        self._kernel = _heat_kernel
        self.grid = grid
        self._q, self._lam = theta_eigenbasis(grid.n_theta)
        self._factor_cache: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _factors(self, dt: float):
        fac = self._factor_cache.get(dt)
        if fac is None:
            fac = thomas_factors(self.grid, dt, self._lam)
            self._factor_cache[dt] = fac
        return fac

    def run_window(
        self, u_int: np.ndarray, f_int: np.ndarray, dt: float, n_steps: int
    ) -> np.ndarray:
        sub, cp, inv_den = self._factors(dt)
        # one transform per window; all steps run in mode space
        vh = np.ascontiguousarray((u_int @ self._q).T)
        src_dt = np.ascontiguousarray((dt * (f_int @ self._q)).T)
        self._kernel.step_window(vh, src_dt, sub, cp, inv_den, n_steps)
        return np.ascontiguousarray((self._q @ vh).T)


def compiled_available() -> bool:
    try:
        from . import _heat_kernel  # noqa: F401
    except ImportError:
        return False
    return True


def default_backend() -> str:
    name = os.environ.get(BACKEND_ENV, "auto")
    if name not in BACKENDS:
        raise ValueError(f"{BACKEND_ENV} must be one of {BACKENDS}, got {name!r}")
    return name


def _make_backend(grid: PolarGrid, backend: str):
    if backend == "auto":
        backend = "compiled" if compiled_available() else "python"
    if backend == "compiled":
        if not compiled_available():
            raise RuntimeError("compiled backend requested but the extension is not built")
        return CompiledBackend(grid)
    if backend == "python":
        return PythonBackend(grid)
    raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")


class HeatSolver:
    """Forward solves and flux extraction on one grid.

    Reentrant: evolve never mutates its input state, so one solver instance
    can serve many proposals or chains concurrently.
    """

    def __init__(self, grid: PolarGrid, backend: str | None = None):
        self.grid = grid
        self._backend = _make_backend(grid, backend or default_backend())

    @property
    def backend_name(self) -> str:
        return self._backend.name

    def _advance(
        self, u: np.ndarray, f_int: np.ndarray, dt: float, t0: float, t_end: float
    ) -> np.ndarray:
        span = t_end - t0
        n_full = int(np.floor(span / dt + 1e-12))
        u_int = u[: self.grid.n_interior]
        if n_full:
            u_int = self._backend.run_window(u_int, f_int, dt, n_full)
        leftover = span - n_full * dt
        if leftover > 1e-12 * max(dt, 1.0):
            u_int = self._backend.run_window(u_int, f_int, leftover, 1)
        out = np.zeros_like(u)
        out[: self.grid.n_interior] = u_int
        return out

    def evolve(
        self, state: HeatState, chi: np.ndarray, cfg: SolverConfig, t_end: float
    ) -> HeatState:
        """Advance to t_end under the constant source b * chi.

        Steps of cfg.dt, with the final step shortened to land exactly on
        t_end.  The Dirichlet ring stays identically zero.
        """
        if t_end < state.t:
            raise ValueError(f"t_end {t_end} precedes state time {state.t}")
        if t_end == state.t:
            return state
        f_int = cfg.b * chi[: self.grid.n_interior]
        u = self._advance(state.u, f_int, cfg.dt, state.t, t_end)
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite field at t={t_end}")
        return HeatState(u=u, t=t_end)

    def evolve_source(
        self, state: HeatState, source_fn, dt: float, t_end: float
    ) -> HeatState:
        """Advance under a time-dependent source field source_fn(t) -> array.

        Backward Euler evaluates the source at the end of each step.  Used by
        verification runs; the sampling hot path uses evolve.
        """
        if t_end < state.t:
            raise ValueError(f"t_end {t_end} precedes state time {state.t}")
        u_int = state.u[: self.grid.n_interior]
        t = state.t
        while t < t_end - 1e-12 * max(dt, 1.0):
            step = min(dt, t_end - t)
            t_next = t + step
            f_int = np.asarray(source_fn(t_next))[: self.grid.n_interior]
            u_int = self._backend.run_window(u_int, f_int, step, 1)
            t = t_next
        u = np.zeros_like(state.u)
        u[: self.grid.n_interior] = u_int
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite field at t={t_end}")
        return HeatState(u=u, t=t_end)

    def boundary_flux(self, state: HeatState) -> FluxRing:
        """Outward-normal derivative at r = 1 by the second-order one-sided
        difference (3 u(1) - 4 u(1-h) + u(1-2h)) / (2h) with u(1) = 0."""
        if self.grid.n_r < 3:
            raise ValueError("flux stencil needs at least 3 radial nodes")
        u = state.u
        vals = (-4.0 * u[-2] + u[-3]) / (2.0 * self.grid.h_r)
        return FluxRing(values=vals, t=state.t)


def dump_field_csv(state: HeatState, grid: PolarGrid, path: str) -> None:
    """Debug dump of the field as (r, theta, u) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "theta", "u"])
        for j, r in enumerate(grid.radii):
            for i, th in enumerate(grid.angles):
                writer.writerow([repr(float(r)), repr(float(th)), repr(float(state.u[j, i]))])
