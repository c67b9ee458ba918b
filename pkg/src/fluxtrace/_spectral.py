"""Angular diagonalization and tridiagonal factors for the compiled backend.

The backward-Euler system for the polar-grid Laplacian couples angular nodes
only through the periodic second difference, whose real orthonormal
eigenbasis is the discrete Fourier cosine/sine family.  Transforming to that
basis turns each time step into n_theta independent radial tridiagonal
solves, which the compiled kernel sweeps with precomputed Thomas factors.
"""
from __future__ import annotations

import numpy as np

from .grid import PolarGrid


def theta_eigenbasis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal eigenbasis Q and eigenvalues lam of the periodic second
    difference matrix (unscaled: entries -2 on the diagonal, 1 on the cyclic
    off-diagonals).

    Columns: constant, then cos/sin pairs per frequency, then the Nyquist
    alternating vector when n is even.  lam[k] = -4 sin^2(pi m_k / n).
    """
    i = np.arange(n)
    cols = [np.full(n, 1.0 / np.sqrt(n))]
    freqs = [0]
    for m in range(1, (n - 1) // 2 + 1):
        cols.append(np.sqrt(2.0 / n) * np.cos(2.0 * np.pi * m * i / n))
        freqs.append(m)
        cols.append(np.sqrt(2.0 / n) * np.sin(2.0 * np.pi * m * i / n))
        freqs.append(m)
    if n % 2 == 0:
        cols.append(np.where(i % 2 == 0, 1.0, -1.0) / np.sqrt(n))
        freqs.append(n // 2)
    q = np.column_stack(cols)
    lam = -4.0 * np.sin(np.pi * np.asarray(freqs) / n) ** 2
    return q, lam


def radial_coefficients(grid: PolarGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Conservative-stencil couplings over the interior radial nodes.

    Returns (lower, upper, r_c): lower[j] couples node j to j-1, upper[j] to
    j+1, both divided by (r_c[j] h_r^2) so the scheme is the flux form of
    (1/r)(r u_r)_r.  lower[0] = 0 is the natural zero-flux closure at the
    pole; the outermost interior node keeps upper[j] in its diagonal but has
    no off-diagonal coupling (Dirichlet ring is zero).
    """
    h_r = grid.h_r
    n_int = grid.n_interior
    j = np.arange(1, n_int + 1)
    r_c = grid.radii[:n_int]
    r_lo = (j - 1) * h_r
    r_hi = j * h_r
    lower = r_lo / (r_c * h_r**2)
    upper = r_hi / (r_c * h_r**2)
    return lower, upper, r_c


def thomas_factors(
    grid: PolarGrid, dt: float, lam: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode Thomas factors of I - dt*T for one step size.

    Returns (sub, cp, inv_den): sub is the (mode-independent) sub-diagonal
    -dt*lower; cp and inv_den are (n_theta, n_interior) forward-elimination
    factors, one row per angular mode.
    """
    lower, upper, r_c = radial_coefficients(grid)
    n_int = grid.n_interior
    h_theta = grid.h_theta
    # diagonal of I - dt*T per mode: radial part plus the mode eigenvalue of
    # the angular term lam/(r^2 h_theta^2)
    theta_scale = lam[:, None] / (r_c[None, :] ** 2 * h_theta**2)
    diag = 1.0 - dt * (-(lower + upper)[None, :] + theta_scale)
    sub = -dt * lower
    sup = -dt * upper
    cp = np.empty_like(diag)
    inv_den = np.empty_like(diag)
    inv_den[:, 0] = 1.0 / diag[:, 0]
    cp[:, 0] = sup[0] * inv_den[:, 0]
    for j in range(1, n_int):
        inv_den[:, j] = 1.0 / (diag[:, j] - sub[j] * cp[:, j - 1])
        cp[:, j] = sup[j] * inv_den[:, j]
    return sub, cp, inv_den
