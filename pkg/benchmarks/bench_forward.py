"""Timing comparison of the two solver backends on the sampling hot path.

One "evaluation" is what the chain pays per proposal: rasterize-sized
constant source, a full window of backward Euler steps, then the boundary
flux ring.  Reports per-evaluation cost for each backend, the speedup, and
the worst field/flux disagreement between them.

Usage: python3 benchmarks/bench_forward.py [--evals N] [--n-r N] ...
"""
import argparse
import time

import numpy as np

from fluxtrace.geometry import CircleSource, rasterize
from fluxtrace.grid import PolarGrid
from fluxtrace.heat import HeatSolver, HeatState, SolverConfig, compiled_available


def time_backend(name, grid, chi, cfg, t_end, n_evals):
    solver = HeatSolver(grid, name)
    state = solver.evolve(HeatState.zero(grid), chi, cfg, t_end)  # warm caches
    t0 = time.perf_counter()
    for _ in range(n_evals):
        state = solver.evolve(HeatState.zero(grid), chi, cfg, t_end)
    per_eval = (time.perf_counter() - t0) / n_evals
    return per_eval, state.u, solver.boundary_flux(state).values


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-r", type=int, default=33)
    parser.add_argument("--n-theta", type=int, default=36)
    parser.add_argument("--window-steps", type=int, default=50)
    parser.add_argument("--evals", type=int, default=100)
    parser.add_argument("--b", type=float, default=50.0)
    args = parser.parse_args()

    grid = PolarGrid(args.n_r, args.n_theta)
    chi = rasterize(CircleSource(rho=0.5, omega=np.pi / 2), grid)
    t_end = 0.5
    cfg = SolverConfig(dt=t_end / args.window_steps, b=args.b)

    print(
        f"grid {args.n_r}x{args.n_theta}, {args.window_steps} steps per "
        f"evaluation, {args.evals} evaluations"
    )
    t_py, u_py, flux_py = time_backend("python", grid, chi, cfg, t_end, args.evals)
    print(f"python  : {t_py * 1e3:8.3f} ms/eval  ({1.0 / t_py:8.1f} eval/s)")

    if not compiled_available():
        print("compiled: not built (pip install -e . compiles it)")
        return 0

    t_c, u_c, flux_c = time_backend("compiled", grid, chi, cfg, t_end, args.evals)
    print(f"compiled: {t_c * 1e3:8.3f} ms/eval  ({1.0 / t_c:8.1f} eval/s)")
    print(f"speedup : {t_py / t_c:.2f}x")
    print(
        f"max diff: field {np.abs(u_c - u_py).max():.3e}, "
        f"flux {np.abs(flux_c - flux_py).max():.3e}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
