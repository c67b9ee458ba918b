import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxtrace.config import preset
from fluxtrace.driver import TruthSpec, make_forward, synthesize_observations
from fluxtrace.heat import HeatSolver, HeatState
from fluxtrace.rng import substream
from fluxtrace.sampling import (
    EmpiricalCovariance,
    ForwardEvaluation,
    ObservationSet,
    PosteriorEnsemble,
    PriorSpec,
    ProposalConfig,
    accept,
    apcn_propose,
    beta_from_delta,
    default_jitter,
    empirical_cov,
    misfit,
    pcn_propose,
    potential_from_prediction,
    run_chain,
)


def chain_config(**kw):
    base = dict(beta=0.5, n_warm=0, n_total=500, k0=100)
    base.update(kw)
    return ProposalConfig(**base)


def zero_misfit_forward(xi):
    return ForwardEvaluation(predicted=np.empty(0))


NO_DATA = ObservationSet(entries=(), sigma=1.0)


class TestSpecs:
    def test_circle_prior(self):
        np.testing.assert_array_equal(PriorSpec.circle().variances, [1.0, 1.0])

    def test_star_prior_decay(self):
        np.testing.assert_array_equal(
            PriorSpec.star(2).variances, [1.0, 1.0, 0.25, 1.0, 0.25]
        )
        np.testing.assert_array_equal(
            PriorSpec.star(3).variances, [1, 1, 0.25, 1 / 9, 1, 0.25, 1 / 9]
        )

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            PriorSpec(np.array([1.0, 0.0]))

    def test_observation_validation(self):
        with pytest.raises(ValueError):
            ObservationSet(entries=((0.5, 0, 1.0),), sigma=0.0)
        with pytest.raises(ValueError):
            ObservationSet(entries=((1.0, 0, 1.0), (0.5, 1, 2.0)), sigma=0.1)

    def test_proposal_config_validation(self):
        with pytest.raises(ValueError):
            chain_config(beta=0.0)
        with pytest.raises(ValueError):
            chain_config(beta=1.5)
        with pytest.raises(ValueError):
            chain_config(n_warm=600, n_total=500)
        with pytest.raises(ValueError):
            chain_config(k0=0)

    def test_default_jitter(self):
        assert default_jitter(PriorSpec.circle()) == pytest.approx(1e-8)
        assert default_jitter(PriorSpec.star(2)) == pytest.approx(1e-8 * 3.5 / 5)

    def test_beta_from_delta(self):
        assert beta_from_delta(2.0) == pytest.approx(1.0)
        assert beta_from_delta(0.5) == pytest.approx(0.8)

    def test_covariance_symmetry_required(self):
        with pytest.raises(ValueError):
            EmpiricalCovariance(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestPotential:
    def test_quadratic_value(self):
        obs = ObservationSet(entries=((0.5, 0, 1.0), (0.5, 1, 2.0)), sigma=0.5)
        assert potential_from_prediction([0.0, 0.0], obs) == pytest.approx(10.0)

    def test_zero_residual(self):
        obs = ObservationSet(entries=((0.5, 0, 1.5),), sigma=0.1)
        assert potential_from_prediction([1.5], obs) == 0.0

    def test_misfit_inf_on_rejection(self):
        obs = ObservationSet(entries=((0.5, 0, 1.0),), sigma=0.1)
        assert misfit(np.zeros(2), obs, lambda xi: None) == float("inf")


class TestAccept:
    def test_improvement_always_accepted(self):
        rng = np.random.default_rng(0)
        assert accept(2.0, 1.0, rng)
        assert accept(1.0, 1.0, rng)

    def test_rejected_shape_never_accepted(self):
        rng = np.random.default_rng(0)
        assert not accept(1.0, float("inf"), rng)
        assert not accept(float("inf"), float("inf"), rng)

    def test_escape_from_infinite_state(self):
        rng = np.random.default_rng(0)
        assert accept(float("inf"), 5.0, rng)

    def test_unit_worse_misfit_rate(self):
        # acceptance probability for a misfit increase of 1 is exp(-1)
        rng = np.random.default_rng(7)
        n = 200_000
        hits = sum(accept(1.0, 2.0, rng) for _ in range(n))
        assert hits / n == pytest.approx(np.exp(-1.0), abs=0.005)

    def test_stream_advances_uniformly(self):
        # every call draws exactly one uniform, whatever branch decides
        r1 = np.random.default_rng(42)
        r2 = np.random.default_rng(42)
        accept(1.0, float("inf"), r1)
        accept(1.0, 1.5, r2)
        assert r1.uniform() == r2.uniform()

    @given(
        phi_cur=st.floats(0, 100, allow_nan=False),
        phi_a=st.floats(0, 100, allow_nan=False),
        worse=st.floats(0, 50, allow_nan=False),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=60)
    def test_monotone_in_proposed_misfit(self, phi_cur, phi_a, worse, seed):
        took_b = accept(phi_cur, phi_a + worse, np.random.default_rng(seed))
        took_a = accept(phi_cur, phi_a, np.random.default_rng(seed))
        if took_b:
            assert took_a


class TestEmpiricalCov:
    def test_two_point_oracle(self):
        c = empirical_cov(np.array([[1.0, 0.0], [-1.0, 0.0]]), jitter=0.0)
        np.testing.assert_array_equal(c.c, [[2.0, 0.0], [0.0, 0.0]])

    def test_identical_samples_jitter_floor(self):
        samples = np.tile([3.0, -1.0, 2.0], (50, 1))
        c = empirical_cov(samples, jitter=1e-6)
        np.testing.assert_allclose(c.c, 1e-6 * np.eye(3), atol=1e-18)

    def test_large_sample_recovers_prior(self):
        prior = PriorSpec(np.array([1.0, 0.25]))
        rng = np.random.default_rng(11)
        draws = rng.standard_normal((100_000, 2)) * prior.sqrt_variances
        c = empirical_cov(draws, jitter=0.0)
        np.testing.assert_allclose(c.c, np.diag(prior.variances), rtol=0.05, atol=0.02)

    def test_fallback_to_prior(self):
        prior = PriorSpec(np.array([1.0, 4.0]))
        c = empirical_cov(np.zeros((1, 2)), jitter=1e-8, prior=prior)
        np.testing.assert_allclose(c.c, np.diag([1.0, 4.0]) + 1e-8 * np.eye(2))

    def test_fallback_requires_prior(self):
        with pytest.raises(ValueError):
            empirical_cov(np.zeros((0, 2)), jitter=0.0)


class TestProposals:
    def test_pcn_marginals(self):
        prior = PriorSpec(np.array([1.0, 0.25]))
        xi = np.array([2.0, -1.0])
        beta = 0.3
        rng = np.random.default_rng(5)
        draws = np.array([pcn_propose(xi, beta, prior, rng) for _ in range(20_000)])
        np.testing.assert_allclose(
            draws.mean(axis=0), np.sqrt(1 - beta**2) * xi, atol=0.02
        )
        np.testing.assert_allclose(
            draws.var(axis=0, ddof=1), beta**2 * prior.variances, rtol=0.08
        )

    def test_pcn_beta_one_forgets_state(self):
        prior = PriorSpec.circle()
        a = pcn_propose(np.array([5.0, 5.0]), 1.0, prior, np.random.default_rng(3))
        b = pcn_propose(np.array([-9.0, 0.1]), 1.0, prior, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_apcn_matches_pcn_when_cov_is_prior(self):
        prior = PriorSpec(np.array([1.0, 4.0, 0.25]))
        emp = EmpiricalCovariance(np.diag(prior.variances))
        xi = np.array([0.7, -2.0, 1.1])
        for beta in (0.1, 0.5, 0.9):
            p = pcn_propose(xi, beta, prior, np.random.default_rng(17))
            a = apcn_propose(xi, beta, prior, emp, np.random.default_rng(17))
            np.testing.assert_allclose(a, p, rtol=0.0, atol=1e-13)

    def test_apcn_handles_degenerate_covariance(self):
        prior = PriorSpec.circle()
        emp = EmpiricalCovariance(np.array([[1e-12, 0.0], [0.0, 1e-12]]))
        out = apcn_propose(np.array([1.0, 1.0]), 0.9, prior, emp, np.random.default_rng(0))
        assert np.all(np.isfinite(out))

    @given(
        beta=st.floats(0.05, 1.0),
        x1=st.floats(-5, 5),
        x2=st.floats(-5, 5),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=40)
    def test_pcn_finite(self, beta, x1, x2, seed):
        out = pcn_propose(
            np.array([x1, x2], dtype=float),
            beta,
            PriorSpec.circle(),
            np.random.default_rng(seed),
        )
        assert out.shape == (2,)
        assert np.all(np.isfinite(out))


class TestRunChain:
    def test_no_data_chain_samples_prior(self):
        # short-chain version of the prior-preservation property
        prior = PriorSpec.circle()
        ens = run_chain(
            np.zeros(2),
            NO_DATA,
            prior,
            chain_config(n_warm=20_000, n_total=20_000, beta=0.5),
            zero_misfit_forward,
            np.random.default_rng(123),
        )
        assert ens.accept_rate == 1.0
        post = ens.posterior_samples()
        np.testing.assert_allclose(post.mean(axis=0), [0.0, 0.0], atol=0.08)
        np.testing.assert_allclose(post.var(axis=0, ddof=1), [1.0, 1.0], atol=0.15)

    def test_shapes_and_bookkeeping(self):
        ens = run_chain(
            np.zeros(2),
            NO_DATA,
            PriorSpec.circle(),
            chain_config(n_total=400, k0=50),
            zero_misfit_forward,
            np.random.default_rng(1),
        )
        assert ens.samples.shape == (400, 2)
        assert ens.potentials.shape == (400,)
        assert ens.accept_count == ens.accepted.sum()
        assert ens.burn_count() == 80
        assert len(ens.posterior_samples()) == 320

    def test_rejected_shapes_never_retained_as_accepted(self):
        obs = ObservationSet(entries=((0.5, 0, 0.3),), sigma=0.5)

        def half_plane(xi):
            if xi[0] < 0:
                return None
            return ForwardEvaluation(predicted=np.array([xi[0]]))

        ens = run_chain(
            np.array([-1.0, 0.0]),  # start outside the admissible set
            obs,
            PriorSpec.circle(),
            chain_config(n_total=800),
            half_plane,
            np.random.default_rng(9),
        )
        assert np.all(np.isfinite(ens.potentials[ens.accepted]))
        assert ens.accept_count > 0
        # the non-finite stretch is the pre-bootstrap prefix only
        finite = np.isfinite(ens.potentials)
        first = np.argmax(finite)
        assert finite[first:].all()

    def test_flux_rings_nan_outside_support(self):
        obs = ObservationSet(entries=((0.5, 0, 0.0),), sigma=1.0)

        def fwd(xi):
            if xi[0] < 0:
                return None
            return ForwardEvaluation(
                predicted=np.array([0.0]), flux_ring=np.full(6, xi[0])
            )

        ens = run_chain(
            np.array([-1.0, 0.0]),
            obs,
            PriorSpec.circle(),
            chain_config(n_total=600),
            fwd,
            np.random.default_rng(2),
        )
        finite = np.isfinite(ens.potentials)
        assert finite.any() and not finite.all()
        assert np.isnan(ens.flux_rings[~finite]).all()
        assert np.isfinite(ens.flux_rings[finite]).all()

    def test_field_thinning(self):
        def fwd(xi):
            return ForwardEvaluation(predicted=np.empty(0), field=np.array([xi[0]]))

        ens = run_chain(
            np.zeros(2),
            NO_DATA,
            PriorSpec.circle(),
            chain_config(n_total=200, thin=10),
            fwd,
            np.random.default_rng(3),
        )
        iters = [k for k, _ in ens.fields]
        assert iters == list(range(10, 201, 10))

    def test_beta_caps_at_one_when_everything_accepts(self):
        ens = run_chain(
            np.zeros(2),
            NO_DATA,
            PriorSpec.circle(),
            chain_config(n_total=2000, beta=0.5),
            zero_misfit_forward,
            np.random.default_rng(4),
        )
        assert ens.beta_final == 1.0

    def test_tuner_skips_out_of_support_windows(self):
        # a chain that never finds the admissible set must not shrink beta:
        # those rejections say nothing about the step size
        ens = run_chain(
            np.zeros(2),
            ObservationSet(entries=((0.5, 0, 1.0),), sigma=0.1),
            PriorSpec.circle(),
            chain_config(n_total=500, beta=0.5),
            lambda xi: None,
            np.random.default_rng(5),
        )
        assert ens.beta_final == 0.5
        assert ens.accept_count == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            run_chain(
                np.zeros(3),
                NO_DATA,
                PriorSpec.circle(),
                chain_config(),
                zero_misfit_forward,
                np.random.default_rng(0),
            )

    def test_reproducible(self):
        args = (
            np.zeros(2),
            NO_DATA,
            PriorSpec.circle(),
            chain_config(n_total=300),
            zero_misfit_forward,
        )
        a = run_chain(*args, np.random.default_rng(77))
        b = run_chain(*args, np.random.default_rng(77))
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.beta_final == b.beta_final


class TestFullScaleStepTuning:
    def test_full_scale_circle_round_accepts_in_target_band(self):
        # Expected: the realized acceptance rate of the full-scale circle
        # chain lands inside the band its step-size controller targets.
        # This currently fails.  Adaptation freezes at 20% of the chain
        # (iteration 2000) while the first covariance refresh only happens
        # at iteration 2501, so the controller never observes the adapted
        # proposal it is nominally tuning; after the refresh the posterior-
        # shaped proposal accepts far above the band at any step size (a
        # fixed-beta scan over (0, 1] never brought the overall rate below
        # 0.50).  Hitting the band would need a second step size tuned for
        # the post-refresh regime.
        cfg = preset("circle-paper")
        grid = cfg.grid()
        solver = HeatSolver(grid, cfg.backend)
        truth = TruthSpec(
            source=cfg.truth_source(),
            b=cfg.b,
            sigma=cfg.sigma,
            master_seed=cfg.master_seed,
        )
        data = synthesize_observations(truth, cfg.times, grid, solver, cfg.window_steps)
        pair = cfg.sensor_pair()
        entries = tuple(
            (cfg.times[0], s, data.datum(0, s)) for s in (pair.first, pair.second)
        )
        obs = ObservationSet(entries=entries, sigma=cfg.sigma)
        forward = make_forward(solver, grid, cfg, HeatState.zero(grid), entries)
        ens = run_chain(
            np.zeros(2),
            obs,
            cfg.prior(),
            cfg.proposal_config(),
            forward,
            substream(cfg.master_seed, "chain-round-1"),
        )
        band = (cfg.proposal_config().target_accept_low, cfg.proposal_config().target_accept_high)
        assert band[0] <= ens.accept_rate <= band[1], (
            f"realized acceptance {ens.accept_rate:.4f} outside target band {band}"
        )


class TestEnsembleSummaries:
    def test_summary_arithmetic(self):
        samples = np.array([[0.0, 0.0], [2.0, 2.0], [4.0, 4.0], [6.0, 6.0]])
        ens = PosteriorEnsemble(
            samples=samples,
            potentials=np.zeros(4),
            accepted=np.ones(4, dtype=bool),
            flux_rings=None,
            accept_count=4,
        )
        assert ens.burn_count(0.5) == 2
        np.testing.assert_allclose(ens.posterior_mean(0.5), [5.0, 5.0])
        np.testing.assert_allclose(ens.posterior_std(0.5), np.sqrt(2.0) * np.ones(2))
