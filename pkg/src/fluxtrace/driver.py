"""Sequential assimilation loop: solve forward to each observation time,
run the round's chain against that round's flux data, restart the PDE from
the posterior-mean field, relocate the sensors, repeat.

Synthetic observations come from one truth solve over the whole schedule;
the noise array is drawn once per master seed from a named substream and
indexed by (time, sensor), so every strategy arm sees the identical noisy
value at a shared (time, sensor) key.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .geometry import ShapeRejected, SourceModel, rasterize
from .grid import PolarGrid
from .heat import FluxRing, HeatSolver, HeatState, SolverConfig
from .rng import substream
from .sampling import (
    ForwardEvaluation,
    ObservationSet,
    PosteriorEnsemble,
    PriorSpec,
    ProposalConfig,
    run_chain,
)
from .strategies import (
    SensorPair,
    StrategyKind,
    flux_variance_map,
    flux_variance_rule,
    posterior_angle_rule,
    random_rule,
    should_stop,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """Observation times, the starting sensor pair and the relocation rule."""

    times: tuple
    initial_sensors: SensorPair
    strategy: StrategyKind

    def __post_init__(self) -> None:
        if len(self.times) == 0 or self.times[0] <= 0:
            raise ValueError("schedule must start after t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")


@dataclass(frozen=True)
class TruthSpec:
    """Ground truth used to synthesize observations."""

    source: SourceModel
    b: float
    sigma: float
    master_seed: int


@dataclass(frozen=True)
class SyntheticData:
    """Exact and noisy flux rings at every observation time."""

    times: tuple
    exact: np.ndarray
    noisy: np.ndarray

    def datum(self, time_index: int, sensor_index: int) -> float:
        return float(self.noisy[time_index, sensor_index])


@dataclass
class RoundRecord:
    index: int
    t_start: float
    t_end: float
    sensors: SensorPair
    obs_entries: tuple
    ensemble: PosteriorEnsemble
    posterior_mean: np.ndarray
    posterior_std: np.ndarray
    accept_rate: float
    beta_final: float
    restart_field: HeatState
    variance_map: np.ndarray | None = None
    proposed_next: SensorPair | None = None
    stop_flag: bool = False


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    stopped_early: bool
    synthetic: SyntheticData
    backend_name: str
    round_seconds: list = field(default_factory=list)
    total_seconds: float = 0.0
    error: str | None = None


def synthesize_observations(
    truth: TruthSpec,
    times,
    grid: PolarGrid,
    solver: HeatSolver,
    window_steps: int,
) -> SyntheticData:
    """Solve the truth forward from zero over the whole schedule and record
    the full noisy flux ring at each observation time."""
    chi = rasterize(truth.source, grid)
    state = HeatState.zero(grid)
    exact = np.empty((len(times), grid.n_theta))
    t_prev = 0.0
    for k, t_obs in enumerate(times):
        cfg = SolverConfig(dt=(t_obs - t_prev) / window_steps, b=truth.b)
        state = solver.evolve(state, chi, cfg, t_obs)
        exact[k] = solver.boundary_flux(state).values
        t_prev = t_obs
    noise = substream(truth.master_seed, "data-noise").standard_normal(exact.shape)
    return SyntheticData(times=tuple(times), exact=exact, noisy=exact + truth.sigma * noise)


def make_forward(
    solver: HeatSolver,
    grid: PolarGrid,
    config: ExperimentConfig,
    restart_state: HeatState,
    obs_entries,
):
    """Forward map for one round: evolve the candidate source from the
    restart state through each observation time, predicting flux at each
    (time, sensor) entry; the returned field and ring are those at the
    final observation time."""
    obs_times = sorted({e[0] for e in obs_entries})
    if obs_times[0] <= restart_state.t:
        raise ValueError("observations must come after the restart time")

    def forward(xi) -> ForwardEvaluation | None:
        try:
            chi = rasterize(config.source_from_xi(xi), grid)
        except ShapeRejected:
            return None
        state = restart_state
        rings = {}
        for t_obs in obs_times:
            cfg = SolverConfig(dt=(t_obs - state.t) / config.window_steps, b=config.b)
            state = solver.evolve(state, chi, cfg, t_obs)
            rings[t_obs] = solver.boundary_flux(state).values
        predicted = np.array([rings[e[0]][e[1]] for e in obs_entries])
        return ForwardEvaluation(
            predicted=predicted, flux_ring=rings[obs_times[-1]], field=state
        )

    return forward


def _mean_restart_field(
    ensemble: PosteriorEnsemble,
    burn_in: float,
    previous: HeatState,
    solver: HeatSolver,
    grid: PolarGrid,
    t_end: float,
) -> HeatState:
    burn = ensemble.burn_count(burn_in)
    kept = [f.u for (it, f) in ensemble.fields if it > burn]
    if not kept:
        # degenerate chain: advance the old restart with no source so the
        # next round still starts from a field at the right time
        logger.warning("no retained fields; advancing previous restart without source")
        cfg = SolverConfig(dt=(t_end - previous.t) / 1, b=0.0)
        return solver.evolve(previous, np.zeros((grid.n_r, grid.n_theta)), cfg, t_end)
    return HeatState(u=np.mean(kept, axis=0), t=t_end)


def run_round(
    k: int,
    restart_state: HeatState,
    obs: ObservationSet,
    prior: PriorSpec,
    proposal_cfg: ProposalConfig,
    config: ExperimentConfig,
    solver: HeatSolver,
    grid: PolarGrid,
    chain_init: np.ndarray,
    rng: np.random.Generator,
    window: tuple,
    sensors: SensorPair,
    forward_restart: HeatState | None = None,
) -> RoundRecord:
    """One assimilation round: chain against this round's data, posterior
    summaries, and the restart field for the next round.

    forward_restart overrides the state the likelihood solves from (the
    cumulative-data mode solves from t = 0 while the restart-field recursion
    still runs from the previous round's mean field).
    """
    t_start, t_end = window
    forward = make_forward(
        solver, grid, config, forward_restart or restart_state, obs.entries
    )
    ensemble = run_chain(chain_init, obs, prior, proposal_cfg, forward, rng)
    restart_next = _mean_restart_field(
        ensemble, config.burn_in, restart_state, solver, grid, t_end
    )
    return RoundRecord(
        index=k,
        t_start=t_start,
        t_end=t_end,
        sensors=sensors,
        obs_entries=obs.entries,
        ensemble=ensemble,
        posterior_mean=ensemble.posterior_mean(config.burn_in),
        posterior_std=ensemble.posterior_std(config.burn_in),
        accept_rate=ensemble.accept_rate,
        beta_final=ensemble.beta_final,
        restart_field=restart_next,
    )


def _next_sensors(
    config: ExperimentConfig,
    kind: StrategyKind,
    record: RoundRecord,
    grid: PolarGrid,
    round_index: int,
) -> SensorPair:
    if kind is StrategyKind.FIXED:
        return record.sensors
    if kind is StrategyKind.RANDOM_EACH_ROUND:
        rng = substream(config.master_seed, f"strategy-round-{round_index}")
        return random_rule(grid.n_theta, rng)
    if kind is StrategyKind.POSTERIOR_ANGLE:
        xi2 = record.ensemble.posterior_samples(config.burn_in)[:, 1]
        omegas = 2.0 * np.arctan(xi2) + np.pi
        return posterior_angle_rule(
            omegas, grid.h_theta, grid.n_theta, circular=config.circular_mean
        )
    return flux_variance_rule(record.ensemble)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Drive the full schedule, relocating sensors between rounds; stops
    early when the variance strategy proposes an already-used pair."""
    t_begin = _time.perf_counter()
    grid = config.grid()
    solver = HeatSolver(grid, config.backend)
    prior = config.prior()
    kind = config.strategy_kind()
    truth = TruthSpec(
        source=config.truth_source(),
        b=config.b,
        sigma=config.sigma,
        master_seed=config.master_seed,
    )
    synthetic = synthesize_observations(
        truth, config.times, grid, solver, config.window_steps
    )

    records: list[RoundRecord] = []
    round_seconds: list[float] = []
    stopped_early = False
    sensors = config.sensor_pair()
    used_pairs = [sensors]
    restart = HeatState.zero(grid)
    chain_init = np.zeros(prior.dim)
    beta = config.beta0
    sensors_by_round = {}

    error: str | None = None
    for k, t_end in enumerate(config.times, start=1):
        t_round = _time.perf_counter()
        t_start = config.times[k - 2] if k > 1 else 0.0
        sensors_by_round[k] = sensors

        if config.data_mode == "per-round":
            entries = tuple(
                (t_end, s, synthetic.datum(k - 1, s)) for s in sensors
            )
            forward_restart = None
        else:
            entries = tuple(
                (config.times[j - 1], s, synthetic.datum(j - 1, s))
                for j in range(1, k + 1)
                for s in sensors_by_round[j]
            )
            forward_restart = HeatState.zero(grid)
        obs = ObservationSet(entries=entries, sigma=config.sigma)

        pcfg = config.proposal_config(beta if (config.carry_beta and k > 1) else None)
        rng = substream(config.master_seed, f"chain-round-{k}")
        logger.info(
            "round %d: window (%.3g, %.3g], sensors %s, beta0 %.4g",
            k, t_start, t_end, tuple(sensors), pcfg.beta,
        )
        try:
            record = run_round(
                k,
                restart,
                obs,
                prior,
                pcfg,
                config,
                solver,
                grid,
                chain_init,
                rng,
                window=(t_start, t_end),
                sensors=sensors,
                forward_restart=forward_restart,
            )
        except Exception as exc:  # noqa: BLE001 - abort run, keep earlier rounds
            logger.exception("round %d failed", k)
            error = f"round {k}: {exc}"
            break
        if record.ensemble.flux_rings is None:
            record.variance_map = None
        else:
            try:
                record.variance_map = flux_variance_map(record.ensemble.flux_rings)
            except ValueError:
                record.variance_map = None
        records.append(record)
        round_seconds.append(_time.perf_counter() - t_round)

        beta = record.beta_final
        chain_init = record.posterior_mean
        restart = record.restart_field

        try:
            proposed = _next_sensors(config, kind, record, grid, k)
        except ValueError as exc:
            logger.warning("round %d: sensor rule failed (%s); keeping pair", k, exc)
            proposed = sensors
        record.proposed_next = proposed
        if kind is StrategyKind.MAX_FLUX_VARIANCE and should_stop(used_pairs, proposed):
            record.stop_flag = True
            stopped_early = True
            logger.info("round %d: proposed pair %s repeats; stopping", k, tuple(proposed))
            break
        sensors = proposed
        used_pairs.append(proposed)

    return ExperimentResult(
        config=config,
        records=records,
        stopped_early=stopped_early,
        synthetic=synthetic,
        backend_name=solver.backend_name,
        round_seconds=round_seconds,
        total_seconds=_time.perf_counter() - t_begin,
        error=error,
    )


# ---------------------------------------------------------------------------
# output bundle


def _r(x) -> str:
    return repr(float(x))


def write_outputs(result: ExperimentResult, out_dir: str) -> None:
    """Write the full deterministic bundle plus the timing sidecar.

    Everything except timing.json is byte-identical across runs with the
    same config and seed; timing.json carries wall-clock and the resolved
    backend and is excluded from that guarantee.
    """
    os.makedirs(out_dir, exist_ok=True)
    config = result.config
    grid = config.grid()
    p = config.prior().dim

    with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "iteration"]
            + [f"xi_{i + 1}" for i in range(p)]
            + ["misfit", "accepted"]
        )
        for rec in result.records:
            ens = rec.ensemble
            for i in range(ens.n_iterations):
                writer.writerow(
                    [rec.index, i + 1]
                    + [_r(v) for v in ens.samples[i]]
                    + [_r(ens.potentials[i]), int(ens.accepted[i])]
                )

    with open(os.path.join(out_dir, "sensors.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "time", "index_1", "index_2", "angle_1", "angle_2", "strategy"]
        )
        for rec in result.records:
            a1, a2 = rec.sensors.angles(grid.h_theta)
            writer.writerow(
                [
                    rec.index,
                    _r(rec.t_end),
                    rec.sensors.first,
                    rec.sensors.second,
                    _r(a1),
                    _r(a2),
                    config.strategy,
                ]
            )

    with open(os.path.join(out_dir, "flux_variance.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round"] + [f"node_{i}" for i in range(grid.n_theta)])
        for rec in result.records:
            if rec.variance_map is None:
                continue
            writer.writerow([rec.index] + [_r(v) for v in rec.variance_map])

    _write_shape_samples(result, out_dir)

    # the output location is not part of the experiment definition, so it
    # stays out of the summary and two runs into different directories of
    # the same experiment produce identical bytes
    config_text = "\n".join(
        line
        for line in config.to_text().splitlines()
        if not line.startswith("run.output_dir")
    )
    summary = {
        "config": config_text + "\n",
        "error": result.error,
        "stopped_early": result.stopped_early,
        "sensor_itinerary": [list(rec.sensors) for rec in result.records],
        "rounds": [
            {
                "round": rec.index,
                "t_start": float(rec.t_start),
                "t_end": float(rec.t_end),
                "sensors": list(rec.sensors),
                "posterior_mean": [float(v) for v in rec.posterior_mean],
                "posterior_std": [float(v) for v in rec.posterior_std],
                "accept_rate": float(rec.accept_rate),
                "beta_final": float(rec.beta_final),
                "proposed_next": list(rec.proposed_next)
                if rec.proposed_next is not None
                else None,
                "stop_flag": rec.stop_flag,
            }
            for rec in result.records
        ],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")

    timing = {
        "backend": result.backend_name,
        "total_seconds": result.total_seconds,
        "round_seconds": result.round_seconds,
    }
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump(timing, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_shape_samples(result: ExperimentResult, out_dir: str) -> None:
    """Thinned post-burn-in shape draws for external plotting: circle centers
    or star radial profiles at the grid angles."""
    config = result.config
    grid = config.grid()
    path = os.path.join(out_dir, "shape_samples.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if config.source_kind == "circle":
            writer.writerow(["round", "iteration", "eta_1", "eta_2"])
        else:
            writer.writerow(
                ["round", "iteration"] + [f"q_{i}" for i in range(grid.n_theta)]
            )
        for rec in result.records:
            ens = rec.ensemble
            burn = ens.burn_count(config.burn_in)
            for i in range(burn, ens.n_iterations):
                it = i + 1
                if it % config.thin != 0:
                    continue
                xi = ens.samples[i]
                if config.source_kind == "circle":
                    source = config.source_from_xi(xi)
                    e1, e2 = source.eta
                    writer.writerow([rec.index, it, _r(e1), _r(e2)])
                else:
                    q = config.source_from_xi(xi).radius_at(grid.angles)
                    writer.writerow([rec.index, it] + [_r(v) for v in q])


def flux_ring_series(result: ExperimentResult) -> list[FluxRing]:
    """Exact truth flux rings of the synthetic run, one per observation time."""
    return [
        FluxRing(values=result.synthetic.exact[k], t=t)
        for k, t in enumerate(result.synthetic.times)
    ]
