"""Gradient-free posterior sampling: Gaussian prior, flux misfit, pCN and
adaptive pCN proposals with periodic empirical-covariance refresh.

The source indicator is discontinuous in the parameters, so everything here
is derivative-free.  The adaptive proposal preconditions with the running
sample covariance; its mean factor is evaluated through the prior-symmetrized
form so any empirical covariance yields a well-defined real proposal.

The step size beta is auto-tuned toward the target acceptance band during
the first 20% of iterations and then frozen, which keeps the retained chain
a genuine Markov chain.  Tuning windows in which the chain sat mostly outside
the shape-admissible set are skipped: acceptance statistics there reflect
the constraint, not the step size.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# S2 eigenvalue floor for the adaptive mean factor
CLIP_FLOOR = 1e-12
# step-size tuning: dead-band multiplicative control on fixed-length windows
TUNE_WINDOW = 50
TUNE_FACTOR = 1.5
BETA_MIN = 1e-4
# fraction of the chain during which beta may move
ADAPT_FRACTION = 0.2
# default burn-in fraction for posterior summaries
BURN_IN_FRACTION = 0.2


@dataclass(frozen=True)
class PriorSpec:
    """Diagonal Gaussian prior N(0, B)."""

    variances: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.variances, dtype=float)
        if v.ndim != 1 or not np.all(v > 0):
            raise ValueError("prior variances must be a positive vector")
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return len(self.variances)

    @property
    def sqrt_variances(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @staticmethod
    def circle() -> "PriorSpec":
        return PriorSpec(np.ones(2))

    @staticmethod
    def star(m: int) -> "PriorSpec":
        """Unit variance on the constant term, 1/i^2 on the order-i cosine
        and sine coefficients."""
        v = np.ones(2 * m + 1)
        for i in range(1, m + 1):
            v[i] = 1.0 / i**2
            v[i + m] = 1.0 / i**2
        return PriorSpec(v)


@dataclass(frozen=True)
class ObservationSet:
    """Flux data (time, sensor index, value) with homogeneous noise level."""

    entries: tuple
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        times = [e[0] for e in self.entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("observation times must be nondecreasing")

    @property
    def values(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ProposalConfig:
    beta: float
    n_warm: int
    n_total: int
    k0: int
    target_accept_low: float = 0.30
    target_accept_high: float = 0.40
    jitter: float | None = None
    thin: int = 10

    def __post_init__(self) -> None:
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0 <= self.n_warm <= self.n_total:
            raise ValueError("need 0 <= n_warm <= n_total")
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")
        if not 0 < self.target_accept_low < self.target_accept_high < 1:
            raise ValueError("need 0 < low < high < 1 for the acceptance band")


@dataclass
class ChainState:
    """Current chain position with the products of its forward evaluation.

    potential, flux_ring and field are always those of xi; a rejected
    proposal leaves all of them untouched.
    """

    xi: np.ndarray
    potential: float
    flux_ring: np.ndarray | None
    field: object | None
    rng: np.random.Generator


@dataclass(frozen=True)
class EmpiricalCovariance:
    c: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if np.abs(c - c.T).max() > 1e-12:
            raise ValueError("covariance must be symmetric within 1e-12")
        object.__setattr__(self, "c", c)


@dataclass
class PosteriorEnsemble:
    """Everything run_chain retains: one row per iteration."""

    samples: np.ndarray
    potentials: np.ndarray
    accepted: np.ndarray
    flux_rings: np.ndarray | None
    fields: list = field(default_factory=list)
    accept_count: int = 0
    beta_final: float = float("nan")

    @property
    def n_iterations(self) -> int:
        return len(self.samples)

    @property
    def accept_rate(self) -> float:
        return self.accept_count / self.n_iterations

    def burn_count(self, fraction: float = BURN_IN_FRACTION) -> int:
        return int(fraction * self.n_iterations)

    def posterior_samples(self, fraction: float = BURN_IN_FRACTION) -> np.ndarray:
        return self.samples[self.burn_count(fraction) :]

    def posterior_mean(self, fraction: float = BURN_IN_FRACTION) -> np.ndarray:
        return self.posterior_samples(fraction).mean(axis=0)

    def posterior_std(self, fraction: float = BURN_IN_FRACTION) -> np.ndarray:
        return self.posterior_samples(fraction).std(axis=0, ddof=1)


@dataclass(frozen=True)
class ForwardEvaluation:
    """What a forward map returns for one admissible parameter vector.

    predicted lines up with the observation entries; flux_ring and field are
    optional extras the driver wants retained.  Inadmissible parameters are
    signaled by the forward map returning None instead.
    """

    predicted: np.ndarray
    flux_ring: np.ndarray | None = None
    field: object | None = None


def potential_from_prediction(predicted: np.ndarray, obs: ObservationSet) -> float:
    """Misfit ||d - g||^2 / (2 sigma^2) given an already-computed prediction."""
    residual = obs.values - np.asarray(predicted, dtype=float)
    return float(residual @ residual / (2.0 * obs.sigma**2))


def misfit(xi: np.ndarray, obs: ObservationSet, forward) -> float:
    """Misfit of xi under the forward map; +inf for rejected shapes."""
    ev = forward(xi)
    if ev is None:
        return float("inf")
    return potential_from_prediction(ev.predicted, obs)


def pcn_propose(
    xi: np.ndarray, beta: float, prior: PriorSpec, rng: np.random.Generator
) -> np.ndarray:
    """Prior-preserving proposal sqrt(1-beta^2) xi + beta w, w ~ N(0, B)."""
    z = rng.standard_normal(prior.dim)
    w = prior.sqrt_variances * z
    return np.sqrt(1.0 - beta**2) * xi + beta * w


def apcn_propose(
    xi: np.ndarray,
    beta: float,
    prior: PriorSpec,
    emp: EmpiricalCovariance,
    rng: np.random.Generator,
) -> np.ndarray:
    """Adaptive proposal with noise from N(0, C) and the matching mean factor.

    The mean factor B^{1/2} sqrt(I - beta^2 S) B^{-1/2} with
    S = B^{-1/2} C B^{-1/2} is evaluated by the symmetric spectral root after
    clipping eigenvalues of I - beta^2 S at CLIP_FLOOR, so the proposal is
    defined for every empirical C.
    """
    z = rng.standard_normal(prior.dim)
    w = np.linalg.cholesky(emp.c) @ z
    s_half = prior.sqrt_variances
    s_half_inv = 1.0 / s_half
    s_mat = s_half_inv[:, None] * emp.c * s_half_inv[None, :]
    eigvals, eigvecs = np.linalg.eigh(s_mat)
    root = np.sqrt(np.clip(1.0 - beta**2 * eigvals, CLIP_FLOOR, None))
    mean_factor = (s_half[:, None] * (eigvecs @ (root[:, None] * eigvecs.T))) * s_half_inv[
        None, :
    ]
    return mean_factor @ xi + beta * w


def accept(phi_current: float, phi_proposed: float, rng: np.random.Generator) -> bool:
    """Metropolis test with probability min(1, exp(phi_current - phi_proposed)).

    One uniform is drawn on every call so the random stream advances the same
    way no matter which branch decides.  A +inf proposed misfit (rejected
    shape) never accepts; a finite proposal always escapes a +inf current
    state.
    """
    u = rng.uniform()
    if np.isinf(phi_proposed):
        return False
    if np.isinf(phi_current):
        return True
    log_alpha = phi_current - phi_proposed
    if log_alpha >= 0:
        return True
    return bool(u < np.exp(log_alpha))


def empirical_cov(
    samples: np.ndarray, jitter: float, prior: PriorSpec | None = None
) -> EmpiricalCovariance:
    """Unbiased sample covariance plus jitter on the diagonal.

    With fewer than 2 samples the prior covariance stands in (and the prior
    must then be supplied).
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        if prior is None:
            raise ValueError("need at least 2 samples or a prior to fall back to")
        c = np.diag(prior.variances).astype(float)
    else:
        c = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    c = 0.5 * (c + c.T) + jitter * np.eye(c.shape[0])
    return EmpiricalCovariance(c)


def default_jitter(prior: PriorSpec) -> float:
    """Refresh regularizer 1e-8 * trace(B) / p."""
    return 1e-8 * float(np.sum(prior.variances)) / prior.dim


def beta_from_delta(delta: float) -> float:
    """Map the discretization parameter delta to the pCN step 2 sqrt(2 delta)/(2+delta)."""
    return 2.0 * np.sqrt(2.0 * delta) / (2.0 + delta)


def run_chain(
    initial_xi: np.ndarray,
    obs: ObservationSet,
    prior: PriorSpec,
    cfg: ProposalConfig,
    forward,
    rng: np.random.Generator,
) -> PosteriorEnsemble:
    """Adaptive pCN chain: warm pCN phase for n_warm iterations, then the
    covariance-preconditioned proposal with a refresh every k0 iterations
    over all samples so far.

    Retains every state, its misfit, its end-of-window flux ring (NaN row
    while the chain sits outside the admissible set) and every thin-th field.
    """
    xi = np.asarray(initial_xi, dtype=float).copy()
    if len(xi) != prior.dim:
        raise ValueError(f"initial state has dim {len(xi)}, prior has {prior.dim}")
    jitter = cfg.jitter if cfg.jitter is not None else default_jitter(prior)

    ev = forward(xi)
    if ev is None:
        state = ChainState(xi=xi, potential=float("inf"), flux_ring=None, field=None, rng=rng)
    else:
        state = ChainState(
            xi=xi,
            potential=potential_from_prediction(ev.predicted, obs),
            flux_ring=ev.flux_ring,
            field=ev.field,
            rng=rng,
        )

    n = cfg.n_total
    samples = np.empty((n, prior.dim))
    potentials = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    rings: np.ndarray | None = None
    fields: list = []
    emp: EmpiricalCovariance | None = None
    beta = cfg.beta
    n_adapt = int(ADAPT_FRACTION * n)
    accept_count = 0
    win_accept = 0
    win_live = 0

    for k in range(1, n + 1):
        if k <= cfg.n_warm:
            proposal = pcn_propose(state.xi, beta, prior, rng)
        else:
            if (k - cfg.n_warm - 1) % cfg.k0 == 0:
                emp = empirical_cov(samples[: k - 1], jitter, prior=prior)
            proposal = apcn_propose(state.xi, beta, prior, emp, rng)

        ev = forward(proposal)
        phi_prop = (
            float("inf") if ev is None else potential_from_prediction(ev.predicted, obs)
        )
        if accept(state.potential, phi_prop, rng):
            state.xi = proposal
            state.potential = phi_prop
            state.flux_ring = ev.flux_ring
            state.field = ev.field
            accept_count += 1
            win_accept += 1
            accepted[k - 1] = True

        samples[k - 1] = state.xi
        potentials[k - 1] = state.potential
        in_support = np.isfinite(state.potential)
        if in_support:
            win_live += 1
        if state.flux_ring is not None:
            if rings is None:
                rings = np.full((n, len(state.flux_ring)), np.nan)
            if in_support:
                rings[k - 1] = state.flux_ring
        if k % cfg.thin == 0 and state.field is not None:
            fields.append((k, state.field))

        if k <= n_adapt and k % TUNE_WINDOW == 0:
            if win_live >= TUNE_WINDOW // 2:
                rate = win_accept / TUNE_WINDOW
                if rate > cfg.target_accept_high:
                    beta = min(1.0, beta * TUNE_FACTOR)
                elif rate < cfg.target_accept_low:
                    beta = max(BETA_MIN, beta / TUNE_FACTOR)
            win_accept = 0
            win_live = 0

    logger.debug(
        "chain done: %d iterations, accept rate %.3f, final beta %.4g",
        n,
        accept_count / n,
        beta,
    )
    return PosteriorEnsemble(
        samples=samples,
        potentials=potentials,
        accepted=accepted,
        flux_rings=rings,
        fields=fields,
        accept_count=accept_count,
        beta_final=beta,
    )
