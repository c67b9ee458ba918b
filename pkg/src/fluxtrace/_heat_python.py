"""Pure-Python solver backend: sparse direct factorization in real space.

Builds the interior-node operator T as a scipy CSR matrix and caches an LU
factorization of I - dt*T per step size.  Deliberately a different solution
route from the compiled mode-space backend, so the two can cross-validate
each other; both are exact direct solves of the same linear system.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._spectral import radial_coefficients
from .grid import PolarGrid


def assemble_operator(grid: PolarGrid) -> sp.csr_matrix:
    """Polar Laplacian over interior unknowns, row-major (radial, angular)."""
    lower, upper, r_c = radial_coefficients(grid)
    n_int = grid.n_interior
    n_th = grid.n_theta
    c = 1.0 / (r_c**2 * grid.h_theta**2)

    n = n_int * n_th
    idx = np.arange(n).reshape(n_int, n_th)
    rows, cols, vals = [], [], []

    diag = -(lower + upper) - 2.0 * c
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(np.repeat(diag, n_th))

    rows.append(idx[1:].ravel())
    cols.append(idx[:-1].ravel())
    vals.append(np.repeat(lower[1:], n_th))

    rows.append(idx[:-1].ravel())
    cols.append(idx[1:].ravel())
    vals.append(np.repeat(upper[:-1], n_th))

    for shift in (1, -1):
        rows.append(idx.ravel())
        cols.append(np.roll(idx, shift, axis=1).ravel())
        vals.append(np.repeat(c, n_th))

    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return mat


class PythonBackend:
    """Backward-Euler window integrator via cached sparse LU solves."""

    name = "python"

    def __init__(self, grid: PolarGrid):
        self.grid = grid
        self._op = assemble_operator(grid)
        self._identity = sp.identity(self._op.shape[0], format="csc")
        self._lu_cache: dict[float, spla.SuperLU] = {}

    def _lu(self, dt: float) -> spla.SuperLU:
        lu = self._lu_cache.get(dt)
        if lu is None:
            lu = spla.splu((self._identity - dt * self._op.tocsc()).tocsc())
            self._lu_cache[dt] = lu
        return lu

    def run_window(
        self, u_int: np.ndarray, f_int: np.ndarray, dt: float, n_steps: int
    ) -> np.ndarray:
        """Advance the interior field by n_steps equal steps with a source
        field held constant over the window."""
        lu = self._lu(dt)
        shape = u_int.shape
        u = u_int.ravel()
        f_dt = dt * f_int.ravel()
        for _ in range(n_steps):
            u = lu.solve(u + f_dt)
        return u.reshape(shape)
