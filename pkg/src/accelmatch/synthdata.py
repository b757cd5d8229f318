"""Synthetic markets with known ground truth for recovery experiments.

The generator mirrors the empirical setting it stands in for: semiannual
markets of a few accelerators with seat quotas, a startup side dominated by
indicator covariates (a rare female-founder flag), cross-state relocation
for roughly a quarter of random pairs, and funding milestones obtained by
thresholding a latent continuous outcome.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import _kernels
from ._util import PURPOSE_GENERATE, rng_for
from .errors import ConfigurationError
from .model import (
    Accelerator,
    ErrorParams,
    Startup,
    build_market,
    deterministic_utility,
    matching_from_indices,
    MatchParams,
)

DEFAULT_STATES = ("CA", "NY", "MA", "TX", "WA", "CO", "IL", "GA")
HUB_STATES = ("CA", "NY", "MA")
DEFAULT_INDUSTRIES = ("software", "biotech", "fintech", "hardware", "consumer", "health")

# first-stage ground truth used when the caller does not override it
DEFAULT_BETA_TRUE = {
    "female_founder": -0.326,
    "relocated": -2.692,
    "log_cohort_size": 0.652,
}
DEFAULT_ALPHA_TRUE = {
    "const": 0.3,
    "female_founder": -0.1,
    "relocated": -0.08,
    "log_cohort_size": 0.15,
}
DEFAULT_THRESHOLDS = {
    "funded": 0.0,
    "exceeds_1m": 0.5,
    "exceeds_2m": 1.0,
    "exceeds_5m": 1.5,
}


@dataclass(frozen=True)
class FeatureSpec:
    """Distribution of one generated feature."""

    name: str
    kind: str  # bernoulli | normal | halfnormal | uniform | int_uniform | one_plus_poisson | constant
    params: tuple

    def draw(self, rng, size):
        p = self.params
        if self.kind == "bernoulli":
            return (rng.random(size) < p[0]).astype(float)
        if self.kind == "normal":
            return p[0] + p[1] * rng.standard_normal(size)
        if self.kind == "halfnormal":
            return np.abs(p[0] * rng.standard_normal(size))
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size)
        if self.kind == "int_uniform":
            return rng.integers(int(p[0]), int(p[1]) + 1, size).astype(float)
        if self.kind == "one_plus_poisson":
            return 1.0 + rng.poisson(p[0], size).astype(float)
        if self.kind == "constant":
            return np.full(size, float(p[0]))
        raise ConfigurationError(f"unknown feature kind {self.kind!r}")

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, doc):
        return cls(str(doc["name"]), str(doc["kind"]), tuple(doc["params"]))


DEFAULT_STARTUP_FEATURES = (
    FeatureSpec("female_founder", "bernoulli", (0.086,)),
    FeatureSpec("no_serial_founder", "bernoulli", (0.5,)),
    FeatureSpec("startup_age", "halfnormal", (1.5,)),
    FeatureSpec("grad_degree", "bernoulli", (0.5,)),
    FeatureSpec("phd_degree", "bernoulli", (0.2,)),
    FeatureSpec("engsci_degree", "bernoulli", (0.5,)),
    FeatureSpec("avg_founder_age", "normal", (33.0, 6.0)),
    FeatureSpec("team_size", "one_plus_poisson", (1.2,)),
)

DEFAULT_ACCELERATOR_FEATURES = (
    FeatureSpec("experience_years", "int_uniform", (0, 10)),
    FeatureSpec("all_men", "bernoulli", (0.7,)),
    FeatureSpec("has_female_founder", "bernoulli", (0.3,)),
)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_markets: int = 37
    n_accelerators: int = 2
    quota_range: tuple = (5, 15)
    cross_state_prob: float = 0.27
    states: tuple = DEFAULT_STATES
    industries: tuple = DEFAULT_INDUSTRIES
    startup_features: tuple = DEFAULT_STARTUP_FEATURES
    accelerator_features: tuple = DEFAULT_ACCELERATOR_FEATURES
    interactions: tuple = (("female_founder", "all_men"), ("female_founder", "relocated"))
    beta_true: dict = field(default_factory=lambda: dict(DEFAULT_BETA_TRUE))
    alpha_true: dict = field(default_factory=lambda: dict(DEFAULT_ALPHA_TRUE))
    rho: float = 0.5
    sigma: float = 1.0
    outcome_thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    start_year: int = 2008
    equity_share: float = 0.062

    def __post_init__(self):
        if self.n_markets < 1 or self.n_accelerators < 1:
            raise ConfigurationError("need at least one market and one accelerator")
        lo, hi = self.quota_range
        if lo < 1 or hi < lo:
            raise ConfigurationError(f"infeasible quota range {self.quota_range}")
        if not 0.0 <= self.cross_state_prob <= 1.0:
            raise ConfigurationError("cross_state_prob must lie in [0, 1]")
        ErrorParams(rho=self.rho, sigma=self.sigma)  # validates

    @property
    def error(self):
        return ErrorParams(rho=self.rho, sigma=self.sigma)

    def to_dict(self):
        return {
            "seed": self.seed,
            "n_markets": self.n_markets,
            "n_accelerators": self.n_accelerators,
            "quota_range": list(self.quota_range),
            "cross_state_prob": self.cross_state_prob,
            "states": list(self.states),
            "industries": list(self.industries),
            "startup_features": [f.to_dict() for f in self.startup_features],
            "accelerator_features": [f.to_dict() for f in self.accelerator_features],
            "interactions": [list(p) for p in self.interactions],
            "beta_true": dict(self.beta_true),
            "alpha_true": dict(self.alpha_true),
            "rho": self.rho,
            "sigma": self.sigma,
            "outcome_thresholds": dict(self.outcome_thresholds),
            "start_year": self.start_year,
            "equity_share": self.equity_share,
        }

    @classmethod
    def from_dict(cls, doc):
        kwargs = dict(doc)
        for key in ("quota_range", "states", "industries"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        for key in ("startup_features", "accelerator_features"):
            if key in kwargs:
                kwargs[key] = tuple(FeatureSpec.from_dict(d) for d in kwargs[key])
        if "interactions" in kwargs:
            kwargs["interactions"] = tuple(tuple(p) for p in kwargs["interactions"])
        return cls(**kwargs)


@dataclass
class SimResult:
    markets: list
    matchings: list
    outcomes: pd.DataFrame
    ground_truth: dict

    @property
    def matchings_by_id(self):
        return {m.id: mu for m, mu in zip(self.markets, self.matchings)}


def _draw_agents(config, market_id, market_index, rng):
    A = config.n_accelerators
    lo, hi = config.quota_range
    quotas = rng.integers(lo, hi + 1, size=A)
    acc_states = [str(rng.choice(config.states)) for _ in range(A)]
    acc_features = {f.name: f.draw(rng, A) for f in config.accelerator_features}
    accelerators = []
    for i in range(A):
        features = {name: float(vals[i]) for name, vals in acc_features.items()}
        features["log_cohort_size"] = math.log(float(quotas[i]))
        features["in_hub"] = float(acc_states[i] in HUB_STATES)
        accelerators.append(
            Accelerator(
                id=f"{market_id}_a{i}",
                quota=int(quotas[i]),
                state=acc_states[i],
                equity_share=config.equity_share,
                features=features,
            )
        )
    S = int(quotas.sum())
    stay = rng.random(S) >= config.cross_state_prob
    local = [acc_states[k] for k in rng.integers(0, A, size=S)]
    home_states = []
    for j in range(S):
        if stay[j]:
            home_states.append(local[j])
        else:
            others = [s for s in config.states if s != local[j]]
            home_states.append(str(others[rng.integers(0, len(others))]))
    s_features = {f.name: f.draw(rng, S) for f in config.startup_features}
    year = config.start_year + market_index // 2
    startups = [
        Startup(
            id=f"{market_id}_s{j}",
            home_state=home_states[j],
            industry=str(rng.choice(config.industries)),
            cohort_year=year,
            features={name: float(vals[j]) for name, vals in s_features.items()},
        )
        for j in range(S)
    ]
    return accelerators, startups


def _outcome_value(covariates_at_pair, alpha_true):
    y = 0.0
    for name, coef in alpha_true.items():
        if name == "const":
            y += coef
        else:
            try:
                y += coef * covariates_at_pair[name]
            except KeyError:
                raise ConfigurationError(
                    f"outcome coefficient {name!r} has no covariate"
                ) from None
    return y


def generate(config):
    """Draw markets, solve each one, and record outcomes plus ground truth."""
    markets = []
    matchings = []
    rows = []
    per_market_truth = {}
    err = config.error
    for k in range(config.n_markets):
        market_id = f"m{k:04d}"
        rng = rng_for(config.seed, PURPOSE_GENERATE, market_id)
        accelerators, startups = _draw_agents(config, market_id, k, rng)
        market = build_market(market_id, accelerators, startups, config.interactions)
        params = MatchParams(beta=dict(config.beta_true))
        ubar = deterministic_utility(market, params)
        A, S = ubar.shape
        eps = rng.standard_normal((A, S))
        noise = rng.standard_normal((A, S))
        eta = err.rho * err.sigma * eps + err.sigma * math.sqrt(1.0 - err.rho**2) * noise
        assign = _kernels.greedy_assign(ubar + eps, market.quotas)
        matching = matching_from_indices(market, assign)
        markets.append(market)
        matchings.append(matching)
        for j, startup in enumerate(startups):
            a = int(assign[j])
            pair = {name: float(m[a, j]) for name, m in market.covariates.items()}
            y = _outcome_value(pair, config.alpha_true) + float(eta[a, j])
            row = {
                "market_id": market_id,
                "startup_id": startup.id,
                "accelerator_id": accelerators[a].id,
                "cohort_year": startup.cohort_year,
                "industry": startup.industry,
                "home_state": startup.home_state,
                "accelerator_state": accelerators[a].state,
                "y_latent": y,
            }
            for name, threshold in config.outcome_thresholds.items():
                row[name] = float(y > threshold)
            row.update(pair)
            rows.append(row)
        per_market_truth[market_id] = {
            "eps": eps.tolist(),
            "eta": eta.tolist(),
            "assignment": assign.tolist(),
        }
    outcomes = pd.DataFrame(rows)
    ground_truth = {
        "config": config.to_dict(),
        "beta_true": dict(config.beta_true),
        "alpha_true": dict(config.alpha_true),
        "rho": config.rho,
        "sigma": config.sigma,
        "correction_slope": config.rho * config.sigma,
        "markets": per_market_truth,
    }
    return SimResult(markets=markets, matchings=matchings, outcomes=outcomes, ground_truth=ground_truth)


def small_config(seed, **overrides):
    """A light configuration for tests: fewer, smaller markets."""
    base = dict(
        seed=seed,
        n_markets=8,
        n_accelerators=2,
        quota_range=(2, 4),
    )
    base.update(overrides)
    return SimConfig(**base)


def with_error(config, rho, sigma):
    return replace(config, rho=rho, sigma=sigma)
