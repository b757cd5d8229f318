import numpy as np
import pytest

from accelmatch.errors import ConfigurationError, ValidationFailure
from accelmatch.model import (
    Accelerator,
    ErrorParams,
    MatchParams,
    Matching,
    Startup,
    build_pair_covariates,
    deterministic_utility,
    load_market,
    market_from_dict,
    market_to_dict,
    save_market,
    validate_market,
    validate_matching,
)

from conftest import make_market


def _startup(**features):
    return Startup(id="s", home_state=features.pop("home_state", "CA"), features=features)


def _accelerator(**features):
    return Accelerator(
        id="a", quota=1, state=features.pop("state", "CA"), features=features
    )


class TestPairCovariates:
    def test_indicator_interaction(self):
        s = _startup(female_founder=1.0)
        a = _accelerator(all_men=1.0)
        pc = build_pair_covariates(s, a, interactions=[("female_founder", "all_men")])
        assert pc.x["female_founder_x_all_men"] == 1.0

    def test_same_state_not_relocated(self):
        pc = build_pair_covariates(_startup(home_state="CA"), _accelerator(state="CA"))
        assert pc.x["relocated"] == 0.0

    def test_cross_state_interactions(self):
        s = _startup(female_founder=1.0, home_state="NY")
        a = _accelerator(all_men=0.0, state="CA")
        pc = build_pair_covariates(
            s, a, interactions=[("female_founder", "all_men"), ("female_founder", "relocated")]
        )
        assert pc.x["relocated"] == 1.0
        assert pc.x["female_founder_x_all_men"] == 0.0
        assert pc.x["female_founder_x_relocated"] == 1.0

    def test_unknown_interaction_factor(self):
        with pytest.raises(ConfigurationError):
            build_pair_covariates(_startup(), _accelerator(), interactions=[("nope", "relocated")])

    def test_name_collision_between_sides(self):
        with pytest.raises(ConfigurationError):
            build_pair_covariates(_startup(shared=1.0), _accelerator(shared=0.0))

    def test_relocation_depends_only_on_state_equality(self):
        for s_state, a_state in [("CA", "CA"), ("NY", "NY"), ("CA", "NY"), ("ZZ", "QQ")]:
            pc = build_pair_covariates(
                _startup(home_state=s_state), _accelerator(state=a_state)
            )
            assert pc.x["relocated"] == float(s_state != a_state)


class TestDeterministicUtility:
    def test_zero_coefficients(self):
        market = make_market(quotas=(1, 2), startup_features=[{"f": 1.0}] * 3)
        ubar = deterministic_utility(market, MatchParams(beta={"f": 0.0}))
        assert np.array_equal(ubar, np.zeros((2, 3)))

    def test_single_relocation_coefficient(self):
        # one relocated pair with the relocation coefficient only
        market = make_market(
            quotas=(1,), states=["CA"], home_states=["NY"]
        )
        ubar = deterministic_utility(market, MatchParams(beta={"relocated": -2.692}))
        assert ubar[0, 0] == pytest.approx(-2.692)

    def test_hand_dot_product(self):
        # independent scalar check: (1, 1) . (-0.326, 0.652) = 0.326
        expected = 1.0 * (-0.326) + 1.0 * 0.652
        market = make_market(
            quotas=(1,),
            startup_features=[{"f1": 1.0}],
            accelerator_features=[{"f2": 1.0}],
        )
        ubar = deterministic_utility(market, MatchParams(beta={"f1": -0.326, "f2": 0.652}))
        assert ubar[0, 0] == pytest.approx(expected)
        assert expected == pytest.approx(0.326)

    def test_unknown_coefficient_name(self):
        market = make_market(quotas=(1,))
        with pytest.raises(ConfigurationError):
            deterministic_utility(market, MatchParams(beta={"missing": 1.0}))

    def test_linearity_in_coefficients(self):
        rng = np.random.default_rng(0)
        market = make_market(
            quotas=(2, 1),
            startup_features=[{"x": float(v)} for v in rng.standard_normal(3)],
            accelerator_features=[{"z": 0.5}, {"z": -1.0}],
        )
        for _ in range(20):
            b1 = {"x": rng.standard_normal(), "z": rng.standard_normal()}
            b2 = {"x": rng.standard_normal(), "z": rng.standard_normal()}
            combined = {k: b1[k] + b2[k] for k in b1}
            lhs = deterministic_utility(market, MatchParams(beta=combined))
            rhs = deterministic_utility(market, MatchParams(beta=b1)) + deterministic_utility(
                market, MatchParams(beta=b2)
            )
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestValidateMarket:
    def test_quota_sum_matches(self):
        assert validate_market(make_market(quotas=(1, 2))) == []

    def test_quota_sum_mismatch(self):
        market = make_market(quotas=(1, 1), n_startups=3)
        violations = validate_market(market)
        assert any("quota sum 2 != 3" in v for v in violations)

    def test_team_size_zero_reported(self):
        market = make_market(quotas=(1,), startup_features=[{"team_size": 0.0}])
        assert any("team_size" in v for v in validate_market(market))

    def test_indicator_out_of_range(self):
        market = make_market(quotas=(1,), startup_features=[{"female_founder": 0.5}])
        assert any("female_founder" in v for v in validate_market(market))

    def test_equity_share_bounds(self):
        market = make_market(quotas=(1,))
        bad = Accelerator(id="a", quota=1, state="XX", features={}, equity_share=1.5)
        from accelmatch.model import Market

        broken = Market(
            id="m",
            accelerators=(bad,),
            startups=market.startups,
            covariates=market.covariates,
        )
        assert any("equity share" in v for v in validate_market(broken))


class TestMatchingValidation:
    def test_quota_exact(self):
        market = make_market(quotas=(1, 2))
        ids = market.startup_ids
        a0, a1 = market.accelerator_ids
        good = Matching(assignment={ids[0]: a0, ids[1]: a1, ids[2]: a1})
        assert validate_matching(market, good) == []
        overfull = Matching(assignment={ids[0]: a1, ids[1]: a1, ids[2]: a1})
        assert validate_matching(market, overfull)

    def test_missing_startup(self):
        market = make_market(quotas=(1, 1))
        partial = Matching(assignment={market.startup_ids[0]: market.accelerator_ids[0]})
        assert any("without an assignment" in v for v in validate_matching(market, partial))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        market = make_market(
            "rt",
            quotas=(1, 2),
            states=["CA", "NY"],
            home_states=["CA", "NY", "TX"],
            startup_features=[{"female_founder": 1.0, "startup_age": 2.0}] * 3,
            accelerator_features=[{"all_men": 1.0}, {"all_men": 0.0}],
            interactions=[("female_founder", "all_men")],
        )
        path = tmp_path / "market.json"
        save_market(market, path)
        loaded = load_market(path)
        assert loaded.id == market.id
        assert loaded.startup_ids == market.startup_ids
        assert loaded.covariate_names == market.covariate_names
        for name in market.covariate_names:
            np.testing.assert_array_equal(loaded.covariates[name], market.covariates[name])

    def test_load_rejects_invalid(self, tmp_path):
        market = make_market(quotas=(1, 1), n_startups=3)
        doc = market_to_dict(market)
        path = tmp_path / "bad.json"
        import json

        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationFailure):
            load_market(path)

    def test_pair_covariate_overrides(self):
        market = make_market(quotas=(1, 1), overrides={"custom": [[1.0, 2.0], [3.0, 4.0]]})
        doc = market_to_dict(market)
        doc["pair_covariates"] = {"custom": [[1.0, 2.0], [3.0, 4.0]]}
        rebuilt = market_from_dict(doc)
        np.testing.assert_array_equal(rebuilt.covariates["custom"], [[1.0, 2.0], [3.0, 4.0]])


class TestParams:
    def test_error_params_bounds(self):
        with pytest.raises(ConfigurationError):
            ErrorParams(rho=1.5, sigma=1.0)
        with pytest.raises(ConfigurationError):
            ErrorParams(rho=0.0, sigma=0.0)
        c = ErrorParams(rho=0.5, sigma=2.0).covariance
        np.testing.assert_allclose(c, [[1.0, 1.0], [1.0, 4.0]])

    def test_match_params_finite(self):
        with pytest.raises(ConfigurationError):
            MatchParams(beta={"x": float("nan")})
