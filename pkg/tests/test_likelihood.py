import math

import mpmath
import numpy as np
import pytest

from accelmatch.errors import ConfigurationError
from accelmatch.likelihood import (
    EpsDraw,
    PreparedPool,
    blocking_threshold,
    draws_for_market,
    log_mean_exp,
    log_stability_prob,
    prepare_market,
    prepared_g,
    prepared_loglik,
    simulated_log_likelihood,
)
from accelmatch.matching import solve_stable
from accelmatch.model import MatchParams, Matching

from conftest import make_market


def mp_log_phi(x):
    """High-precision log of the standard normal CDF (independent oracle)."""
    with mpmath.workdps(50):
        return float(mpmath.log(mpmath.ncdf(mpmath.mpf(x))))


BASE = MatchParams(beta={"base_value": 1.0})


def value_market(values, quotas):
    values = np.asarray(values, dtype=float)
    return make_market(
        "vm", quotas=quotas, n_startups=values.shape[1], overrides={"base_value": values}
    )


def observed(market, values):
    return solve_stable(market, np.asarray(values, dtype=float))


class TestBlockingThreshold:
    def test_two_by_two_hand_value(self):
        # matched values: a0-s0 at 2.0 realized, a1-s1 at 0.5 realized;
        # unmatched (a0, s1) with deterministic value 1.0:
        # max(0.5 - 1.0, 2.0 - 1.0) = 1.0
        ubar = np.array([[2.0, 1.0], [0.4, 0.5]])
        market = value_market(ubar, quotas=(1, 1))
        matching = Matching(
            assignment={
                market.startup_ids[0]: market.accelerator_ids[0],
                market.startup_ids[1]: market.accelerator_ids[1],
            }
        )
        eps = np.zeros(2)  # realized = deterministic
        thr = blocking_threshold(
            market, matching, BASE, eps, market.accelerator_ids[0], market.startup_ids[1]
        )
        assert thr == pytest.approx(max(0.5 - 1.0, 2.0 - 1.0))
        assert thr == pytest.approx(1.0)

    def test_zero_when_matched_values_equal_pair_value(self):
        ubar = np.array([[1.0, 1.0], [1.0, 1.0]])
        market = value_market(ubar, quotas=(1, 1))
        matching = Matching(
            assignment={
                market.startup_ids[0]: market.accelerator_ids[0],
                market.startup_ids[1]: market.accelerator_ids[1],
            }
        )
        thr = blocking_threshold(
            market, matching, BASE, np.zeros(2), market.accelerator_ids[0], market.startup_ids[1]
        )
        assert thr == pytest.approx(0.0)

    def test_linear_in_binding_branch(self):
        # startup side binds; raising its matched value by 1 raises the threshold by 1
        ubar = np.array([[2.0, 1.0], [0.4, 3.0]])
        market = value_market(ubar, quotas=(1, 1))
        matching = Matching(
            assignment={
                market.startup_ids[0]: market.accelerator_ids[0],
                market.startup_ids[1]: market.accelerator_ids[1],
            }
        )
        args = (market.accelerator_ids[0], market.startup_ids[1])
        t0 = blocking_threshold(market, matching, BASE, np.zeros(2), *args)
        t1 = blocking_threshold(market, matching, BASE, np.array([0.0, 1.0]), *args)
        assert t1 - t0 == pytest.approx(1.0)

    def test_matched_pair_rejected(self):
        ubar = np.array([[2.0, 1.0], [0.4, 0.5]])
        market = value_market(ubar, quotas=(1, 1))
        matching = observed(market, ubar)
        with pytest.raises(ValueError):
            blocking_threshold(
                market, matching, BASE, np.zeros(2),
                matching.assignment[market.startup_ids[0]], market.startup_ids[0],
            )


class TestLogStabilityProb:
    def test_single_accelerator_is_zero(self):
        market = value_market([[0.3, -0.2, 1.0]], quotas=(3,))
        matching = observed(market, market.covariates["base_value"])
        g = log_stability_prob(market, matching, BASE, EpsDraw(eps_matched=np.zeros(3)))
        assert g == 0.0

    def test_threshold_zero_gives_log_half(self):
        ubar = np.array([[1.0, 1.0], [1.0, 1.0]])
        market = value_market(ubar, quotas=(1, 1))
        matching = Matching(
            assignment={
                market.startup_ids[0]: market.accelerator_ids[0],
                market.startup_ids[1]: market.accelerator_ids[1],
            }
        )
        g = log_stability_prob(market, matching, BASE, EpsDraw(eps_matched=np.zeros(2)))
        # both unmatched pairs have threshold 0, so g = 2 * ln(1/2)
        assert g == pytest.approx(2 * math.log(0.5), rel=1e-12)

    def test_two_by_two_against_high_precision_cdf(self):
        ubar = np.array([[2.0, 1.0], [0.4, 0.5]])
        market = value_market(ubar, quotas=(1, 1))
        matching = observed(market, ubar)
        eps = np.array([0.3, -0.2])
        # by hand: matched realized a0-s0 = 2.3, a1-s1 = 0.3
        # unmatched (a0, s1): max(0.3, 2.3) - 1.0 = 1.3
        # unmatched (a1, s0): max(2.3, 0.3) - 0.4 = 1.9
        expected = mp_log_phi(1.3) + mp_log_phi(1.9)
        g = log_stability_prob(market, matching, BASE, EpsDraw(eps_matched=eps))
        assert g == pytest.approx(expected, rel=1e-10)

    def test_nonpositive_and_monotone_in_unmatched_value(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            ubar = rng.standard_normal((2, 3))
            market = value_market(ubar, quotas=(1, 2))
            matching = observed(market, ubar)
            eps = rng.standard_normal(3)
            g = log_stability_prob(market, matching, BASE, EpsDraw(eps_matched=eps))
            assert g <= 0.0
            # raise one unmatched pair's deterministic value: g weakly falls
            from accelmatch.model import matching_to_indices

            assign = matching_to_indices(market, matching)
            a, s = next(
                (a, s) for a in range(2) for s in range(3) if assign[s] != a
            )
            bumped = ubar.copy()
            bumped[a, s] += 0.7
            market2 = value_market(bumped, quotas=(1, 2))
            matching2 = Matching(assignment={
                market2.startup_ids[i]: market2.accelerator_ids[assign[i]] for i in range(3)
            })
            g2 = log_stability_prob(market2, matching2, BASE, EpsDraw(eps_matched=eps))
            assert g2 <= g + 1e-12


class TestSimulatedLogLikelihood:
    def test_single_accelerator_markets_flat_zero(self):
        market = value_market([[0.5, 1.5]], quotas=(2,))
        matching = observed(market, market.covariates["base_value"])
        for beta in (0.0, 1.0, -3.0):
            params = MatchParams(beta={"base_value": beta})
            val = simulated_log_likelihood([market], [matching], params, n_draws=50, seed=1)
            assert val == 0.0

    def test_deterministic_given_seed(self):
        ubar = np.array([[0.6, -0.1, 0.2], [0.0, 0.4, -0.5]])
        market = value_market(ubar, quotas=(2, 1))
        matching = observed(market, ubar)
        a = simulated_log_likelihood([market], [matching], BASE, n_draws=300, seed=9)
        b = simulated_log_likelihood([market], [matching], BASE, n_draws=300, seed=9)
        assert a == b  # bit-identical
        assert a <= 0.0

    def test_zero_covariate_is_inert(self):
        ubar = np.array([[0.6, -0.1], [0.0, 0.4]])
        market = make_market(
            "zc", quotas=(1, 1),
            overrides={"base_value": ubar, "dead": np.zeros((2, 2))},
        )
        matching = observed(market, ubar)
        base = simulated_log_likelihood([market], [matching], BASE, n_draws=200, seed=3)
        for coef in (-2.0, 0.0, 5.0):
            params = MatchParams(beta={"base_value": 1.0, "dead": coef})
            assert simulated_log_likelihood(
                [market], [matching], params, n_draws=200, seed=3
            ) == pytest.approx(base, rel=1e-12)

    def test_requires_positive_draws(self):
        market = value_market([[0.0, 0.0]], quotas=(2,))
        matching = observed(market, market.covariates["base_value"])
        with pytest.raises(ConfigurationError):
            simulated_log_likelihood([market], [matching], BASE, n_draws=0, seed=1)

    def test_per_draw_probabilities_in_unit_interval(self):
        rng = np.random.default_rng(13)
        ubar = rng.standard_normal((3, 4))
        market = value_market(ubar, quotas=(1, 2, 1))
        matching = observed(market, ubar)
        prepared = prepare_market(market, matching, ("base_value",), 500, 21)
        g = prepared_g(prepared, np.array([1.0]))
        p = np.exp(g)
        assert np.all(p > 0.0) and np.all(p <= 1.0)

    def test_matches_brute_force_frequency_on_tiny_market(self):
        # oracle: solve the matching for fresh noise, count how often the
        # observed one appears; compare with the analytic-in-unmatched-noise
        # Monte Carlo likelihood
        ubar = np.array([[0.8, 0.1], [-0.2, 0.5]])
        market = value_market(ubar, quotas=(1, 1))
        matching = observed(market, ubar)
        rng = np.random.default_rng(17)
        n = 200_000
        from accelmatch._kernels import greedy_assign_batch
        from accelmatch.model import matching_to_indices

        target = matching_to_indices(market, matching)
        assigns = greedy_assign_batch(ubar, market.quotas, rng.standard_normal((n, 2, 2)))
        hits = (assigns == target[None, :]).all(axis=1)
        p_mc = hits.mean()
        se_mc = hits.std(ddof=1) / math.sqrt(n)

        prepared = prepare_market(market, matching, ("base_value",), 100_000, 23)
        g = prepared_g(prepared, np.array([1.0]))
        p_sml = float(np.exp(log_mean_exp(g)))
        se_sml = float(np.exp(g).std(ddof=1) / math.sqrt(len(g)))
        assert abs(p_sml - p_mc) <= 3.0 * math.hypot(se_mc, se_sml)

    def test_pool_matches_per_market_path(self):
        rng = np.random.default_rng(29)
        prepared = []
        markets = []
        matchings = []
        for i in range(4):
            A = int(rng.integers(1, 4))
            quotas = tuple(int(q) for q in rng.integers(1, 3, size=A))
            ubar = rng.standard_normal((A, sum(quotas)))
            market = make_market(f"pool{i}", quotas=quotas, overrides={"base_value": ubar})
            matching = observed(market, ubar)
            markets.append(market)
            matchings.append(matching)
            prepared.append(prepare_market(market, matching, ("base_value",), 250, 31))
        pool = PreparedPool(prepared)
        for beta in ([0.5], [1.0], [-0.7]):
            vec = np.array(beta)
            assert pool.loglik(vec) == pytest.approx(
                prepared_loglik(prepared, vec), rel=1e-10
            )

    def test_draws_keyed_by_market_id(self):
        m1 = value_market([[0.1, 0.2]], quotas=(2,))
        d1 = draws_for_market(m1, 64, seed=5)
        d2 = draws_for_market(m1, 64, seed=5)
        np.testing.assert_array_equal(d1, d2)
        other = make_market("other", quotas=(2,), overrides={"base_value": [[0.1, 0.2]]})
        assert not np.array_equal(d1, draws_for_market(other, 64, seed=5))
