"""Domain types: markets, matchings, pair covariates, model parameters.

A market is one admission cohort: a set of accelerators with seat quotas, a
set of startups, and a dense accelerator-by-startup table of pair
covariates.  Everything is immutable after construction and safe to share
across worker processes.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import dump_json, load_json
from .errors import ConfigurationError, NumericError, ValidationFailure

# Feature-level invariants checked by validate_market, keyed by the
# conventional feature names.  Unknown feature names are allowed and
# unchecked.
INDICATOR_FEATURES = frozenset(
    {
        "female_founder",
        "no_serial_founder",
        "grad_degree",
        "phd_degree",
        "engsci_degree",
        "in_hub",
        "all_men",
        "has_female_founder",
    }
)
NONNEGATIVE_FEATURES = frozenset({"startup_age", "experience_years"})
POSITIVE_FEATURES = frozenset({"team_size"})

RELOCATED = "relocated"


def interaction_name(a, b):
    return f"{a}_x_{b}"


@dataclass(frozen=True)
class Startup:
    id: str
    home_state: str
    features: dict
    industry: str = "unknown"
    cohort_year: int = 0


@dataclass(frozen=True)
class Accelerator:
    id: str
    quota: int
    state: str
    features: dict
    equity_share: float = 0.062


@dataclass(frozen=True)
class PairCovariates:
    """Covariate vector for one accelerator-startup pair."""

    x: dict


@dataclass(frozen=True)
class MatchParams:
    """Coefficients of the deterministic part of the pair value."""

    beta: dict

    def __post_init__(self):
        for name, value in self.beta.items():
            if not math.isfinite(value):
                raise ConfigurationError(f"non-finite coefficient for {name!r}")


@dataclass(frozen=True)
class ErrorParams:
    """Joint distribution of the pair-value shock and the outcome shock.

    The pair-value shock is standard normal (a scale normalization); the
    outcome shock has standard deviation sigma and correlation rho with it.
    """

    rho: float
    sigma: float

    def __post_init__(self):
        if not abs(self.rho) <= 1.0:
            raise ConfigurationError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.sigma > 0.0:
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")

    @property
    def covariance(self):
        c = self.rho * self.sigma
        return np.array([[1.0, c], [c, self.sigma**2]])


@dataclass(frozen=True)
class Matching:
    """Total assignment of startups to accelerators."""

    assignment: dict  # startup id -> accelerator id


@dataclass(frozen=True)
class Market:
    id: str
    accelerators: tuple
    startups: tuple
    covariates: dict = field(repr=False)  # name -> read-only (A, S) array
    interactions: tuple = ()

    @property
    def n_accelerators(self):
        return len(self.accelerators)

    @property
    def n_startups(self):
        return len(self.startups)

    @property
    def quotas(self):
        return np.array([a.quota for a in self.accelerators], dtype=np.int64)

    @property
    def covariate_names(self):
        return tuple(self.covariates)

    @property
    def accelerator_ids(self):
        return tuple(a.id for a in self.accelerators)

    @property
    def startup_ids(self):
        return tuple(s.id for s in self.startups)

    def accelerator_index(self, accelerator_id):
        try:
            return self.accelerator_ids.index(accelerator_id)
        except ValueError:
            raise ConfigurationError(
                f"unknown accelerator {accelerator_id!r} in market {self.id!r}"
            ) from None

    def startup_index(self, startup_id):
        try:
            return self.startup_ids.index(startup_id)
        except ValueError:
            raise ConfigurationError(
                f"unknown startup {startup_id!r} in market {self.id!r}"
            ) from None

    def pair_covariates(self, accelerator_id, startup_id):
        a = self.accelerator_index(accelerator_id)
        s = self.startup_index(startup_id)
        return PairCovariates(x={name: float(m[a, s]) for name, m in self.covariates.items()})


def build_pair_covariates(startup, accelerator, interactions=()):
    """Assemble the covariate vector for one pair.

    The vector carries the startup features, the accelerator features, a
    relocation indicator (states differ), and one product term per requested
    interaction.  Interaction factors may reference any name assembled so
    far, including ``relocated``.
    """
    x = {}
    for name, value in startup.features.items():
        x[name] = float(value)
    for name, value in accelerator.features.items():
        if name in x:
            raise ConfigurationError(
                f"feature name {name!r} appears on both sides of pair "
                f"({accelerator.id!r}, {startup.id!r})"
            )
        x[name] = float(value)
    x[RELOCATED] = float(startup.home_state != accelerator.state)
    for fa, fb in interactions:
        for factor in (fa, fb):
            if factor not in x:
                raise ConfigurationError(f"unknown feature name {factor!r} in interaction")
        x[interaction_name(fa, fb)] = x[fa] * x[fb]
    return PairCovariates(x=x)


def _freeze(arr):
    arr = np.array(arr, dtype=np.float64)  # owning copy; callers keep their buffers
    arr.flags.writeable = False
    return arr


def build_market(market_id, accelerators, startups, interactions=(), overrides=None):
    """Construct a market, building the dense pair-covariate table.

    ``overrides`` may supply whole named (A, S) matrices that replace or
    extend the assembled covariates.
    """
    accelerators = tuple(accelerators)
    startups = tuple(startups)
    interactions = tuple((str(a), str(b)) for a, b in interactions)
    A, S = len(accelerators), len(startups)
    if A < 1 or S < 1:
        raise ValidationFailure(f"market {market_id!r} needs at least one agent per side")

    per_pair = [
        [build_pair_covariates(s, a, interactions) for s in startups] for a in accelerators
    ]
    names = list(per_pair[0][0].x)
    table = {}
    for name in names:
        m = np.empty((A, S))
        for ai in range(A):
            for si in range(S):
                m[ai, si] = per_pair[ai][si].x[name]
        table[name] = m
    if overrides:
        for name, matrix in overrides.items():
            m = np.asarray(matrix, dtype=np.float64)
            if m.shape != (A, S):
                raise ConfigurationError(
                    f"override {name!r} has shape {m.shape}, expected {(A, S)}"
                )
            table[str(name)] = m
    table = {name: _freeze(m) for name, m in table.items()}
    return Market(
        id=str(market_id),
        accelerators=accelerators,
        startups=startups,
        covariates=table,
        interactions=interactions,
    )


def deterministic_utility(market, params):
    """Deterministic pair values: the covariate table contracted with beta.

    Every coefficient name must exist in the market's covariates; covariates
    without a coefficient simply do not enter.
    """
    A, S = market.n_accelerators, market.n_startups
    ubar = np.zeros((A, S))
    for name, coef in params.beta.items():
        try:
            ubar += coef * market.covariates[name]
        except KeyError:
            raise ConfigurationError(
                f"coefficient {name!r} has no covariate in market {market.id!r}"
            ) from None
    if not np.all(np.isfinite(ubar)):
        raise NumericError(f"non-finite deterministic utility in market {market.id!r}")
    return ubar


def validate_market(market):
    """Collect every structural violation; an empty list means the market is usable."""
    violations = []
    quotas = [a.quota for a in market.accelerators]
    if any(q < 1 for q in quotas):
        violations.append("every accelerator quota must be at least 1")
    total = sum(quotas)
    if total != market.n_startups:
        violations.append(f"quota sum {total} != {market.n_startups} startups")
    ids = [a.id for a in market.accelerators]
    if len(set(ids)) != len(ids):
        violations.append("duplicate accelerator ids")
    ids = [s.id for s in market.startups]
    if len(set(ids)) != len(ids):
        violations.append("duplicate startup ids")
    for acc in market.accelerators:
        if not 0.0 < acc.equity_share < 1.0:
            violations.append(f"accelerator {acc.id!r}: equity share must lie in (0, 1)")
        violations.extend(_feature_violations(f"accelerator {acc.id!r}", acc.features))
    for s in market.startups:
        violations.extend(_feature_violations(f"startup {s.id!r}", s.features))

    A, S = market.n_accelerators, market.n_startups
    for name, m in market.covariates.items():
        if m.shape != (A, S):
            violations.append(f"covariate {name!r} has shape {m.shape}, expected {(A, S)}")
        elif not np.all(np.isfinite(m)):
            violations.append(f"covariate {name!r} contains non-finite values")
    # derived entries must be consistent with the agents that produced them
    if RELOCATED in market.covariates and market.covariates[RELOCATED].shape == (A, S):
        expected = np.array(
            [[float(s.home_state != a.state) for s in market.startups] for a in market.accelerators]
        )
        if not np.array_equal(market.covariates[RELOCATED], expected):
            violations.append("relocation indicator disagrees with the state labels")
    for fa, fb in market.interactions:
        name = interaction_name(fa, fb)
        if all(k in market.covariates for k in (name, fa, fb)):
            if not np.allclose(
                market.covariates[name], market.covariates[fa] * market.covariates[fb]
            ):
                violations.append(f"interaction {name!r} is not the product of its factors")
    return violations


def _feature_violations(who, features):
    out = []
    for name, value in features.items():
        value = float(value)
        if not math.isfinite(value):
            out.append(f"{who}: feature {name!r} is not finite")
        elif name in INDICATOR_FEATURES and value not in (0.0, 1.0):
            out.append(f"{who}: indicator {name!r} must be 0 or 1, got {value}")
        elif name in NONNEGATIVE_FEATURES and value < 0.0:
            out.append(f"{who}: feature {name!r} must be nonnegative, got {value}")
        elif name in POSITIVE_FEATURES and value < 1.0:
            out.append(f"{who}: feature {name!r} must be at least 1, got {value}")
    return out


def validate_matching(market, matching):
    """Check that a matching is total over startups and fills every quota exactly."""
    violations = []
    assigned = matching.assignment
    missing = [sid for sid in market.startup_ids if sid not in assigned]
    if missing:
        violations.append(f"startups without an assignment: {missing}")
    extra = [sid for sid in assigned if sid not in market.startup_ids]
    if extra:
        violations.append(f"assignments for unknown startups: {extra}")
    counts = {aid: 0 for aid in market.accelerator_ids}
    for sid, aid in assigned.items():
        if aid not in counts:
            violations.append(f"startup {sid!r} assigned to unknown accelerator {aid!r}")
        else:
            counts[aid] += 1
    for acc in market.accelerators:
        if counts[acc.id] != acc.quota:
            violations.append(
                f"accelerator {acc.id!r} holds {counts[acc.id]} startups, quota {acc.quota}"
            )
    return violations


def matching_to_indices(market, matching):
    """Matching as an int64 vector: accelerator index per startup index."""
    violations = validate_matching(market, matching)
    if violations:
        raise ValidationFailure(f"infeasible matching for market {market.id!r}", violations)
    a_index = {aid: i for i, aid in enumerate(market.accelerator_ids)}
    return np.array(
        [a_index[matching.assignment[sid]] for sid in market.startup_ids], dtype=np.int64
    )


def matching_from_indices(market, assign):
    assign = np.asarray(assign)
    return Matching(
        assignment={
            sid: market.accelerator_ids[int(assign[i])] for i, sid in enumerate(market.startup_ids)
        }
    )


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------


def market_to_dict(market):
    doc = {
        "id": market.id,
        "accelerators": [
            {
                "id": a.id,
                "quota": a.quota,
                "state": a.state,
                "equity_share": a.equity_share,
                "features": dict(a.features),
            }
            for a in market.accelerators
        ],
        "startups": [
            {
                "id": s.id,
                "home_state": s.home_state,
                "industry": s.industry,
                "cohort_year": s.cohort_year,
                "features": dict(s.features),
            }
            for s in market.startups
        ],
        "interactions": [list(pair) for pair in market.interactions],
    }
    return doc


def market_from_dict(doc):
    try:
        accelerators = [
            Accelerator(
                id=str(a["id"]),
                quota=int(a["quota"]),
                state=str(a["state"]),
                equity_share=float(a.get("equity_share", 0.062)),
                features={str(k): float(v) for k, v in a.get("features", {}).items()},
            )
            for a in doc["accelerators"]
        ]
        startups = [
            Startup(
                id=str(s["id"]),
                home_state=str(s["home_state"]),
                industry=str(s.get("industry", "unknown")),
                cohort_year=int(s.get("cohort_year", 0)),
                features={str(k): float(v) for k, v in s.get("features", {}).items()},
            )
            for s in doc["startups"]
        ]
        market = build_market(
            doc["id"],
            accelerators,
            startups,
            interactions=[tuple(p) for p in doc.get("interactions", [])],
            overrides=doc.get("pair_covariates"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"market document is missing field {exc}") from None
    return market


def load_market(path):
    """Read one market file; structurally invalid markets are rejected here."""
    market = market_from_dict(load_json(path))
    violations = validate_market(market)
    if violations:
        raise ValidationFailure(f"invalid market in {path}", violations)
    return market


def save_market(market, path):
    dump_json(market_to_dict(market), path)


def save_matchings(matchings_by_market, path, meta=None):
    """Persist observed matchings as {market id: {startup id: accelerator id}}."""
    doc = {
        "matchings": {
            mid: dict(m.assignment) for mid, m in sorted(matchings_by_market.items())
        }
    }
    if meta:
        doc["meta"] = meta
    dump_json(doc, path)


def load_matchings(path):
    doc = load_json(path)
    try:
        table = doc["matchings"]
    except (TypeError, KeyError):
        raise ConfigurationError(f"{path} is not a matchings file") from None
    return {
        str(mid): Matching(assignment={str(s): str(a) for s, a in entry.items()})
        for mid, entry in table.items()
    }
