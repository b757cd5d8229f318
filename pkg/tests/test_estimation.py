import numpy as np
import pytest

from accelmatch.errors import ConfigurationError, NumericError
from accelmatch.estimation import (
    EstimationConfig,
    FirstStageFit,
    bootstrap_first_stage,
    estimate_first_stage,
    fit_first_stage,
    goodness_of_fit,
)
from accelmatch.likelihood import PreparedPool, prepare_market
from accelmatch.model import MatchParams
from accelmatch.synthdata import SimConfig, generate, small_config


@pytest.fixture(scope="module")
def small_sim():
    # dense indicators keep every coefficient identified in tiny resamples
    config = small_config(
        seed=51,
        n_markets=10,
        n_accelerators=3,
        quota_range=(1, 3),
        beta_true={"no_serial_founder": -0.4, "relocated": -1.5, "log_cohort_size": 0.7},
    )
    return config, generate(config)


NAMES = ("no_serial_founder", "relocated", "log_cohort_size")


class TestEstimateFirstStage:
    def test_requires_competition(self):
        config = small_config(seed=1, n_markets=3, n_accelerators=1, quota_range=(2, 3))
        sim = generate(config)
        with pytest.raises(ConfigurationError):
            estimate_first_stage(
                sim.markets, sim.matchings, EstimationConfig(seed=1, n_draws=50)
            )

    def test_deterministic_given_seed(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=120, coefficients=NAMES, n_restarts=0)
        fit1 = estimate_first_stage(sim.markets, sim.matchings, est)
        fit2 = estimate_first_stage(sim.markets, sim.matchings, est)
        assert fit1.beta_hat == fit2.beta_hat  # bit-identical
        assert fit1.final_loglik == fit2.final_loglik

    def test_objective_never_worse_than_start(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=120, coefficients=NAMES, n_restarts=0)
        fit = estimate_first_stage(sim.markets, sim.matchings, est)
        pool = PreparedPool(
            [prepare_market(m, mu, NAMES, 120, 5) for m, mu in zip(sim.markets, sim.matchings)]
        )
        assert fit.final_loglik >= pool.loglik(np.zeros(3)) - 1e-12

    def test_local_max_profile(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=200, coefficients=NAMES)
        fit = estimate_first_stage(sim.markets, sim.matchings, est)
        pool = PreparedPool(
            [prepare_market(m, mu, NAMES, 200, 5) for m, mu in zip(sim.markets, sim.matchings)]
        )
        beta = np.array([fit.beta_hat[n] for n in NAMES])
        at_hat = pool.loglik(beta)
        for j in range(3):
            for delta in (-0.25, 0.25):
                bumped = beta.copy()
                bumped[j] += delta
                assert pool.loglik(bumped) <= at_hat + 1e-9

    def test_null_model_recovers_zero(self):
        # pure-noise covariate with beta_true = 0 everywhere
        config = small_config(
            seed=77,
            n_markets=12,
            n_accelerators=2,
            quota_range=(2, 3),
            beta_true={"phd_degree": 0.0},
        )
        sim = generate(config)
        est = EstimationConfig(seed=77, n_draws=150, coefficients=("phd_degree",), n_restarts=0)
        fit = estimate_first_stage(sim.markets, sim.matchings, est)
        se, _ = bootstrap_first_stage(
            sim.markets, sim.matchings, est, n_boot=30, beta_start=fit.beta_hat
        )
        assert abs(fit.beta_hat["phd_degree"]) <= 2.0 * se["phd_degree"]

    def test_duplicating_markets_keeps_estimate(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=150, coefficients=NAMES, n_restarts=0)
        fit = estimate_first_stage(sim.markets, sim.matchings, est)
        doubled_fit = estimate_first_stage(
            list(sim.markets) * 2, list(sim.matchings) * 2, est
        )
        for n in NAMES:
            assert doubled_fit.beta_hat[n] == pytest.approx(fit.beta_hat[n], abs=2e-3)
        # twice the markets, same draws per id: the objective exactly doubles
        assert doubled_fit.final_loglik == pytest.approx(2.0 * fit.final_loglik, rel=1e-6)


class TestBootstrap:
    def test_needs_two_markets(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=60, coefficients=NAMES)
        with pytest.raises(ConfigurationError):
            bootstrap_first_stage(sim.markets[:1], sim.matchings[:1], est, n_boot=10)

    def test_identical_markets_give_zero_se(self, small_sim):
        config, sim = small_sim
        # the same market repeated: every resample is equivalent, so every
        # replication lands on the same estimate and the SE collapses to 0
        markets = [sim.markets[0]] * 3
        matchings = [sim.matchings[0]] * 3
        est = EstimationConfig(seed=5, n_draws=80, coefficients=NAMES, n_restarts=0)
        se, estimates = bootstrap_first_stage(markets, matchings, est, n_boot=8)
        assert np.ptp(estimates, axis=0) == pytest.approx(0.0, abs=1e-12)
        assert all(v == 0.0 for v in se.values())

    def test_duplication_shrinks_se(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=80, coefficients=NAMES, n_restarts=0)
        fit = estimate_first_stage(sim.markets, sim.matchings, est)
        se1, _ = bootstrap_first_stage(
            sim.markets, sim.matchings, est, n_boot=24, beta_start=fit.beta_hat
        )
        se4, _ = bootstrap_first_stage(
            list(sim.markets) * 4, list(sim.matchings) * 4, est,
            n_boot=24, beta_start=fit.beta_hat,
        )
        # 4x the markets: SEs should drop by roughly half
        for n in NAMES:
            assert se4[n] < se1[n]


class TestGoodnessOfFit:
    def test_paper_anchor_ratio(self):
        # ratio 4.63 corresponds to a pseudo R^2 of about 82%
        assert 4.63 / (1 + 4.63) == pytest.approx(0.822, abs=0.005)

    def test_ratio_formula(self, small_sim):
        config, sim = small_sim
        params = MatchParams(beta=dict(config.beta_true))
        rng = np.random.default_rng(0)
        eps_hats = [rng.standard_normal(m.n_startups) for m in sim.markets]
        ratio, pseudo = goodness_of_fit(sim.markets, sim.matchings, params, eps_hats)
        assert ratio > 0
        assert pseudo == pytest.approx(ratio / (1 + ratio))

    def test_zero_coefficients_zero_ratio(self, small_sim):
        config, sim = small_sim
        params = MatchParams(beta={n: 0.0 for n in NAMES})
        rng = np.random.default_rng(1)
        eps_hats = [rng.standard_normal(m.n_startups) for m in sim.markets]
        ratio, pseudo = goodness_of_fit(sim.markets, sim.matchings, params, eps_hats)
        assert ratio == 0.0
        assert pseudo == 0.0

    def test_half_at_ratio_one(self):
        assert 1.0 / (1 + 1.0) == 0.5

    def test_zero_variance_rejected(self, small_sim):
        config, sim = small_sim
        params = MatchParams(beta=dict(config.beta_true))
        eps_hats = [np.zeros(m.n_startups) for m in sim.markets]
        with pytest.raises(NumericError):
            goodness_of_fit(sim.markets, sim.matchings, params, eps_hats)


class TestFitRoundTrip:
    def test_full_fit_and_serialization(self, small_sim):
        config, sim = small_sim
        est = EstimationConfig(seed=5, n_draws=100, coefficients=NAMES, n_restarts=0)
        fit = fit_first_stage(sim.markets, sim.matchings, est, n_boot=6)
        assert fit.n_boot == 6
        assert set(fit.se) == set(NAMES)
        assert fit.pseudo_r2 == pytest.approx(fit.gof_ratio / (1 + fit.gof_ratio))
        doc = fit.to_dict()
        back = FirstStageFit.from_dict(doc)
        assert back.beta_hat == fit.beta_hat
        assert back.se == fit.se
        assert back.final_loglik == fit.final_loglik
