"""Experiment configuration: flat dotted-key text format, typed registry,
canonical serialization, and the built-in presets.

The format is deliberately dumb: one "key = value" per line, '#' comments,
no sections or nesting.  Unknown keys are hard errors with line numbers,
because a silently ignored typo (say, a misspelled strategy key) would
invalidate a comparison between strategy arms.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import CircleSource, StarSource, circle_from_unconstrained
from .grid import PolarGrid
from .sampling import PriorSpec, ProposalConfig
from .strategies import SensorPair, StrategyKind


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _parse_int_pair(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two integers, got {text!r}")
    return (parts[0], parts[1])


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_REQUIRED = object()


@dataclass(frozen=True)
class _Key:
    attr: str
    convert: Callable
    default: object = _REQUIRED
    choices: tuple | None = None


# registry order is the canonical serialization order
_REGISTRY: dict[str, _Key] = {
    "source.kind": _Key("source_kind", str, choices=("circle", "star")),
    "source.m": _Key("source_m", int, default=2),
    "source.truth": _Key("source_truth", _parse_floats),
    "grid.n_r": _Key("n_r", int),
    "grid.n_theta": _Key("n_theta", int),
    "solver.b": _Key("b", float),
    "solver.window_steps": _Key("window_steps", int, default=50),
    "solver.backend": _Key("backend", str, default="auto", choices=("auto", "compiled", "python")),
    "noise.sigma": _Key("sigma", float),
    "sampler.beta0": _Key("beta0", float, default=0.5),
    "sampler.n_warm": _Key("n_warm", int),
    "sampler.n_total": _Key("n_total", int),
    "sampler.k0": _Key("k0", int),
    "sampler.accept_low": _Key("accept_low", float, default=0.30),
    "sampler.accept_high": _Key("accept_high", float, default=0.40),
    "sampler.thin": _Key("thin", int, default=10),
    "sampler.burn_in": _Key("burn_in", float, default=0.2),
    "sampler.carry_beta": _Key("carry_beta", _parse_bool, default=True),
    "schedule.times": _Key("times", _parse_floats),
    "schedule.initial_sensors": _Key("initial_sensors", _parse_int_pair),
    "schedule.strategy": _Key(
        "strategy",
        str,
        choices=("fixed", "random", "posterior-angle", "max-flux-variance"),
    ),
    "schedule.circular_mean": _Key("circular_mean", _parse_bool, default=False),
    "driver.data_mode": _Key(
        "data_mode", str, default="per-round", choices=("per-round", "cumulative")
    ),
    "run.master_seed": _Key("master_seed", int, default=1),
    "run.output_dir": _Key("output_dir", str, default="out"),
}

_ATTR_TO_KEY = {spec.attr: key for key, spec in _REGISTRY.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    source_kind: str
    source_m: int
    source_truth: tuple
    n_r: int
    n_theta: int
    b: float
    window_steps: int
    backend: str
    sigma: float
    beta0: float
    n_warm: int
    n_total: int
    k0: int
    accept_low: float
    accept_high: float
    thin: int
    burn_in: float
    carry_beta: bool
    times: tuple
    initial_sensors: tuple
    strategy: str
    circular_mean: bool
    data_mode: str
    master_seed: int
    output_dir: str

    def __post_init__(self) -> None:
        self.validate()

    # -- structure checks beyond per-key typing ---------------------------
    def validate(self) -> None:
        p = 2 if self.source_kind == "circle" else 2 * self.source_m + 1
        if len(self.source_truth) != p:
            raise ConfigError(
                f"source.truth needs {p} entries for kind {self.source_kind!r}, "
                f"got {len(self.source_truth)}"
            )
        if self.source_kind == "star" and self.source_m < 1:
            raise ConfigError("source.m must be >= 1")
        PolarGrid(self.n_r, self.n_theta)  # raises on bad grid
        if self.window_steps < 1:
            raise ConfigError("solver.window_steps must be >= 1")
        if not self.sigma > 0:
            raise ConfigError("noise.sigma must be positive")
        if not 0 < self.beta0 <= 1:
            raise ConfigError("sampler.beta0 must lie in (0, 1]")
        if not 0 <= self.n_warm <= self.n_total:
            raise ConfigError("need 0 <= sampler.n_warm <= sampler.n_total")
        if self.k0 < 1:
            raise ConfigError("sampler.k0 must be >= 1")
        if not 0 < self.accept_low < self.accept_high < 1:
            raise ConfigError("need 0 < accept_low < accept_high < 1")
        if self.thin < 1:
            raise ConfigError("sampler.thin must be >= 1")
        if not 0 <= self.burn_in < 1:
            raise ConfigError("sampler.burn_in must lie in [0, 1)")
        if len(self.times) == 0 or self.times[0] <= 0:
            raise ConfigError("schedule.times must start after t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("schedule.times must be strictly increasing")
        s1, s2 = self.initial_sensors
        if not (0 <= s1 < self.n_theta and 0 <= s2 < self.n_theta):
            raise ConfigError(
                f"schedule.initial_sensors must lie in [0, {self.n_theta})"
            )
        if s1 == s2:
            raise ConfigError("schedule.initial_sensors must be distinct")
        kind = StrategyKind.parse(self.strategy)
        if kind is StrategyKind.POSTERIOR_ANGLE and self.source_kind != "circle":
            raise ConfigError("posterior-angle strategy needs a circle source")
        if self.master_seed < 0:
            raise ConfigError("run.master_seed must be nonnegative")
        # the truth must itself be an admissible source
        self.truth_source()

    # -- domain object builders ------------------------------------------
    def grid(self) -> PolarGrid:
        return PolarGrid(self.n_r, self.n_theta)

    def prior(self) -> PriorSpec:
        if self.source_kind == "circle":
            return PriorSpec.circle()
        return PriorSpec.star(self.source_m)

    def source_from_xi(self, xi) -> CircleSource | StarSource:
        if self.source_kind == "circle":
            return circle_from_unconstrained(xi)
        return StarSource(np.asarray(xi, dtype=float))

    def truth_source(self) -> CircleSource | StarSource:
        source = self.source_from_xi(np.array(self.source_truth))
        if isinstance(source, StarSource) and not source.admissible_on(self.grid()):
            raise ConfigError("source.truth is not an admissible star shape")
        return source

    def proposal_config(self, beta: float | None = None) -> ProposalConfig:
        return ProposalConfig(
            beta=self.beta0 if beta is None else beta,
            n_warm=self.n_warm,
            n_total=self.n_total,
            k0=self.k0,
            target_accept_low=self.accept_low,
            target_accept_high=self.accept_high,
            thin=self.thin,
        )

    def strategy_kind(self) -> StrategyKind:
        return StrategyKind.parse(self.strategy)

    def sensor_pair(self) -> SensorPair:
        return SensorPair(*self.initial_sensors)

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    def to_text(self) -> str:
        lines = []
        for key, spec in _REGISTRY.items():
            lines.append(f"{key} = {_fmt(getattr(self, spec.attr))}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key-value format; all errors carry line numbers."""
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _REGISTRY:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        spec = _REGISTRY[key]
        try:
            converted = spec.convert(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        if spec.choices is not None and converted not in spec.choices:
            raise ConfigError(
                f"line {lineno}: {key!r} must be one of {spec.choices}, got {converted!r}"
            )
        seen[key] = converted

    kwargs = {}
    missing = []
    for key, spec in _REGISTRY.items():
        if key in seen:
            kwargs[spec.attr] = seen[key]
        elif spec.default is _REQUIRED:
            missing.append(key)
        else:
            kwargs[spec.attr] = spec.default
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


PRESETS: dict[str, str] = {
    # full-scale circle run: 3 rounds, sensors start opposite the source
    "circle-paper": """
source.kind = circle
source.truth = 0.0,-1.0
grid.n_r = 33
grid.n_theta = 36
solver.b = 50.0
noise.sigma = 0.05
sampler.n_warm = 0
sampler.n_total = 10000
sampler.k0 = 2500
schedule.times = 0.5,1.0,1.5
schedule.initial_sensors = 22,30
schedule.strategy = posterior-angle
""",
    # same physics at a few-minutes-per-seed scale
    "circle-desk": """
source.kind = circle
source.truth = 0.0,-1.0
grid.n_r = 33
grid.n_theta = 36
solver.b = 50.0
noise.sigma = 0.05
sampler.n_warm = 0
sampler.n_total = 2000
sampler.k0 = 500
schedule.times = 0.5,1.0,1.5
schedule.initial_sensors = 22,30
schedule.strategy = posterior-angle
""",
    # smoke-test scale: seconds, used by determinism checks
    "circle-mini": """
source.kind = circle
source.truth = 0.0,-1.0
grid.n_r = 17
grid.n_theta = 36
solver.b = 50.0
solver.window_steps = 25
noise.sigma = 0.05
sampler.n_warm = 0
sampler.n_total = 300
sampler.k0 = 100
schedule.times = 0.5,1.0
schedule.initial_sensors = 22,30
schedule.strategy = posterior-angle
""",
    # full-scale star run: warm pCN phase, then adaptive proposals
    "peanut-paper": """
source.kind = star
source.m = 2
source.truth = 1.0,0.0,0.0,0.0,0.3
grid.n_r = 33
grid.n_theta = 36
solver.b = 10.0
noise.sigma = 0.01
sampler.n_warm = 1000
sampler.n_total = 15000
sampler.k0 = 2500
schedule.times = 0.5,1.0,1.5,2.0,2.5
schedule.initial_sensors = 11,5
schedule.strategy = max-flux-variance
""",
    # desk-scale star run; the warm phase ends inside the step-size
    # adaptation window so the controller also observes the adaptive
    # proposal regime before freezing beta
    "peanut-desk": """
source.kind = star
source.m = 2
source.truth = 1.0,0.0,0.0,0.0,0.3
grid.n_r = 33
grid.n_theta = 36
solver.b = 10.0
noise.sigma = 0.01
sampler.n_warm = 350
sampler.n_total = 3000
sampler.k0 = 200
schedule.times = 0.5,1.0,1.5,2.0,2.5,3.0
schedule.initial_sensors = 11,5
schedule.strategy = max-flux-variance
""",
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return parse_config(PRESETS[name])


def preset_names() -> list[str]:
    return sorted(PRESETS)
