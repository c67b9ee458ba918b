"""Sensor relocation rules between assimilation rounds.

Four strategies pick the next two boundary sensors: keep them fixed, draw
them at random, straddle the posterior-mean source angle (circle case), or
take the two angular nodes whose flux varied most over the round's samples.
The variance rule also comes with a stopping test: once it proposes a pair
that was already used, further rounds would cycle, so the sequence ends.
"""
from __future__ import annotations

import enum
import math
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class SensorPair(NamedTuple):
    first: int
    second: int

    def angles(self, h_theta: float) -> tuple[float, float]:
        return (self.first * h_theta, self.second * h_theta)

    def unordered(self) -> frozenset:
        return frozenset((self.first, self.second))


class StrategyKind(enum.Enum):
    FIXED = "fixed"
    RANDOM_EACH_ROUND = "random"
    POSTERIOR_ANGLE = "posterior-angle"
    MAX_FLUX_VARIANCE = "max-flux-variance"

    @classmethod
    def parse(cls, text: str) -> "StrategyKind":
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(
            f"unknown strategy {text!r}; expected one of "
            f"{[k.value for k in cls]}"
        )


def posterior_angle_rule(
    omega_samples: Sequence[float],
    h_theta: float,
    n_theta: int,
    circular: bool = False,
) -> SensorPair:
    """Sensors at the grid angles bracketing the posterior-mean source angle.

    The mean is the plain arithmetic mean by default; circular=True switches
    to the circular mean, which is the right thing when samples straddle the
    0/2pi cut.  An exactly-on-node mean degenerates to equal floor and ceil;
    that case returns the node and its upper neighbor.
    """
    omega = np.asarray(omega_samples, dtype=float)
    if omega.size == 0:
        raise ValueError("need at least one angle sample")
    if circular:
        mean = math.atan2(np.sin(omega).mean(), np.cos(omega).mean()) % (2.0 * math.pi)
    else:
        mean = float(omega.mean())
    x = mean / h_theta
    lo = math.floor(x)
    hi = math.ceil(x)
    if lo == hi:
        hi = lo + 1
    return SensorPair(lo % n_theta, hi % n_theta)


def flux_variance_map(rings: np.ndarray) -> np.ndarray:
    """Per-angular-node flux variance over the retained samples.

    Rows with any NaN (iterations spent outside the admissible set) are
    dropped; at least two full rows must remain.
    """
    rings = np.asarray(rings, dtype=float)
    valid = rings[np.all(np.isfinite(rings), axis=1)]
    if len(valid) < 2:
        raise ValueError(f"need at least 2 flux rings, got {len(valid)}")
    return valid.var(axis=0, ddof=1)


def flux_variance_rule(ensemble) -> SensorPair:
    """Nodes of the largest and second-largest flux variance.

    Accepts a PosteriorEnsemble (uses its flux_rings) or a plain ring array.
    Ties break toward the lower angular index.
    """
    rings = getattr(ensemble, "flux_rings", ensemble)
    if rings is None:
        raise ValueError("ensemble holds no flux rings")
    variances = flux_variance_map(rings)
    order = np.argsort(-variances, kind="stable")
    return SensorPair(int(order[0]), int(order[1]))


def random_rule(n_theta: int, rng: np.random.Generator) -> SensorPair:
    """Two distinct node indices, uniform without replacement."""
    if n_theta < 2:
        raise ValueError("need at least 2 angular nodes")
    idx = rng.choice(n_theta, size=2, replace=False)
    return SensorPair(int(idx[0]), int(idx[1]))


def should_stop(history: Iterable[SensorPair], proposed: SensorPair) -> bool:
    """True iff the proposed unordered pair already appears in the history."""
    target = frozenset(proposed)
    return any(frozenset(pair) == target for pair in history)
