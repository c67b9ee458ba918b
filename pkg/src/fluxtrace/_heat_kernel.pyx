# cython: boundscheck=False, wraparound=False, cdivision=True
"""Hot loop of the compiled backend: backward-Euler steps in angular mode
space.  Each angular mode carries an independent radial tridiagonal system;
the Thomas factors are precomputed once per step size, so a step is one
forward and one backward sweep per mode.
"""


def step_window(
    double[:, ::1] vh,
    double[:, ::1] src_dt,
    double[::1] sub,
    double[:, ::1] cp,
    double[:, ::1] inv_den,
    int n_steps,
):
    """Advance vh (modes x radial nodes) by n_steps equal backward-Euler
    steps with the constant mode-space source term src_dt = dt * f.

    All sweeps run in place; vh holds the final state on return.
    """
    cdef Py_ssize_t n_modes = vh.shape[0]
    cdef Py_ssize_t n = vh.shape[1]
    cdef Py_ssize_t step, m, j
    with nogil:
        for step in range(n_steps):
            for m in range(n_modes):
                # forward elimination; vh[m, j] becomes the intermediate y_j
                vh[m, 0] = (vh[m, 0] + src_dt[m, 0]) * inv_den[m, 0]
                for j in range(1, n):
                    vh[m, j] = (
                        vh[m, j] + src_dt[m, j] - sub[j] * vh[m, j - 1]
                    ) * inv_den[m, j]
                # back substitution
                for j in range(n - 2, -1, -1):
                    vh[m, j] = vh[m, j] - cp[m, j] * vh[m, j + 1]
