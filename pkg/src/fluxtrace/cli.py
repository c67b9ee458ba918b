"""Command-line front end.

Three subcommands: ``presets`` lists or prints the bundled configurations,
``forward`` dumps the truth flux time series without any sampling, and
``experiment`` runs the full assimilation loop, optionally as parallel
replicates over consecutive seeds.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, load_config, parse_config, preset, preset_names
from .driver import TruthSpec, run_experiment, synthesize_observations, write_outputs
from .geometry import rasterize
from .heat import HeatSolver, HeatState, SolverConfig

logger = logging.getLogger(__name__)


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", help="name of a bundled configuration")
    group.add_argument("--config", help="path to a configuration file")
    sub.add_argument("--seed", type=int, help="override run.master_seed")
    sub.add_argument("--output-dir", help="override run.output_dir")
    sub.add_argument(
        "--backend",
        choices=("auto", "compiled", "python"),
        help="override solver.backend",
    )
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any configuration key (repeatable)",
    )


def _resolve_config(args):
    cfg = preset(args.preset) if args.preset else load_config(args.config)
    if args.overrides:
        lines = cfg.to_text().splitlines()
        for assignment in args.overrides:
            key = assignment.split("=", 1)[0].strip()
            for i, line in enumerate(lines):
                if line.split("=", 1)[0].strip() == key:
                    lines[i] = assignment
                    break
            else:
                lines.append(assignment)
        cfg = parse_config("\n".join(lines) + "\n")
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if args.backend is not None:
        updates["backend"] = args.backend
    return cfg.with_overrides(**updates) if updates else cfg


def cmd_presets(args) -> int:
    if args.show:
        print(preset(args.show).to_text(), end="")
    else:
        for name in preset_names():
            print(name)
    return 0


def cmd_forward(args) -> int:
    """Solve the truth forward over the whole schedule and dump the full
    flux ring after every time step."""
    cfg = _resolve_config(args)
    grid = cfg.grid()
    solver = HeatSolver(grid, cfg.backend)
    chi = rasterize(cfg.truth_source(), grid)
    state = HeatState.zero(grid)
    rows = []
    t_prev = 0.0
    for t_obs in cfg.times:
        dt = (t_obs - t_prev) / cfg.window_steps
        scfg = SolverConfig(dt=dt, b=cfg.b)
        for j in range(1, cfg.window_steps + 1):
            target = t_obs if j == cfg.window_steps else t_prev + j * dt
            state = solver.evolve(state, chi, scfg, target)
            rows.append((state.t, solver.boundary_flux(state).values))
        t_prev = t_obs
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "flux_series.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + [f"node_{i}" for i in range(grid.n_theta)])
        for t, ring in rows:
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in ring])
    noisy = synthesize_observations(
        TruthSpec(cfg.truth_source(), cfg.b, cfg.sigma, cfg.master_seed),
        cfg.times,
        grid,
        solver,
        cfg.window_steps,
    )
    obs_path = os.path.join(cfg.output_dir, "observations.csv")
    with open(obs_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + [f"node_{i}" for i in range(grid.n_theta)])
        for k, t in enumerate(noisy.times):
            writer.writerow(
                [repr(float(t))] + [repr(float(v)) for v in noisy.noisy[k]]
            )
    print(f"wrote {path} and {obs_path} (backend: {solver.backend_name})")
    return 0


def _run_replicate(cfg) -> tuple[int, bool, str | None]:
    """Run one experiment in a worker process; returns (seed, ok, error)."""
    try:
        result = run_experiment(cfg)
        write_outputs(result, cfg.output_dir)
    except Exception as exc:  # noqa: BLE001 - reported to the parent
        logger.exception("replicate with seed %d failed", cfg.master_seed)
        return cfg.master_seed, False, str(exc)
    return cfg.master_seed, result.error is None, result.error


def cmd_experiment(args) -> int:
    cfg = _resolve_config(args)
    if args.replicates < 1:
        print("--replicates must be >= 1", file=sys.stderr)
        return 1
    if args.replicates == 1:
        try:
            result = run_experiment(cfg)
        except Exception as exc:  # noqa: BLE001
            logger.exception("experiment failed")
            print(f"experiment failed: {exc}", file=sys.stderr)
            return 1
        write_outputs(result, cfg.output_dir)
        if result.error is not None:
            print(f"experiment aborted: {result.error}", file=sys.stderr)
            print(f"partial outputs in {cfg.output_dir}", file=sys.stderr)
            return 1
        n = len(result.records)
        tail = " (stopped by sensor-cycle rule)" if result.stopped_early else ""
        print(f"completed {n} round(s){tail}; outputs in {cfg.output_dir}")
        return 0

    replicas = [
        cfg.with_overrides(
            master_seed=cfg.master_seed + i,
            output_dir=os.path.join(cfg.output_dir, f"seed-{cfg.master_seed + i}"),
        )
        for i in range(args.replicates)
    ]
    failures = []
    with ProcessPoolExecutor(max_workers=min(args.replicates, os.cpu_count() or 1)) as pool:
        for seed, ok, err in pool.map(_run_replicate, replicas):
            status = "ok" if ok else f"FAILED: {err}"
            print(f"seed {seed}: {status}")
            if not ok:
                failures.append(seed)
    if failures:
        print(f"{len(failures)} replicate(s) failed: {failures}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxtrace",
        description="Bayesian recovery of a discontinuous heat source from "
        "moving boundary flux sensors",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log per-round progress"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_presets = sub.add_parser("presets", help="list bundled configurations")
    p_presets.add_argument("--show", metavar="NAME", help="print one preset in full")
    p_presets.set_defaults(func=cmd_presets)

    p_forward = sub.add_parser(
        "forward", help="solve the truth forward and dump the flux series"
    )
    _add_config_args(p_forward)
    p_forward.set_defaults(func=cmd_forward)

    p_exp = sub.add_parser("experiment", help="run the assimilation loop")
    _add_config_args(p_exp)
    p_exp.add_argument(
        "--replicates",
        type=int,
        default=1,
        help="independent runs with consecutive seeds, one subdirectory each",
    )
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
