"""Brute-force reference implementations.

Everything here is deliberately independent of the production algorithms:
stability is established by enumerating feasible assignments, probabilities
by solving freshly drawn noise matrices, conditional moments by rejection
sampling.  Tests and the validation suite compare the fast paths against
these, always within Monte-Carlo error bars.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels
from ._util import PURPOSE_ORACLE, rng_for
from .errors import ConfigurationError, NumericError
from .matching import UtilityRealization
from .model import deterministic_utility, matching_from_indices, matching_to_indices

ENUMERATION_GUARD = 1_000_000
CHUNK = 100_000
MIN_ACCEPTED = 200


def n_feasible_assignments(quotas, n_startups):
    quotas = [int(q) for q in quotas]
    if sum(quotas) != n_startups:
        raise ConfigurationError("quota sum must equal the number of startups")
    count = math.factorial(n_startups)
    for q in quotas:
        count //= math.factorial(q)
    return count


def iter_feasible_assignments(quotas, n_startups):
    """Yield every quota-respecting assignment vector (int64, S)."""
    quotas = [int(q) for q in quotas]
    assign = np.empty(n_startups, dtype=np.int64)

    def fill(acc_index, remaining):
        if acc_index == len(quotas) - 1:
            assign[list(remaining)] = acc_index
            yield assign.copy()
            return
        for chosen in combinations(remaining, quotas[acc_index]):
            assign[list(chosen)] = acc_index
            rest = [s for s in remaining if s not in set(chosen)]
            yield from fill(acc_index + 1, rest)

    yield from fill(0, list(range(n_startups)))


def _stable_assignment(u, assign):
    S = u.shape[1]
    current = u[assign, np.arange(S)]
    worst = np.array([u[a, assign == a].min() for a in range(u.shape[0])])
    blocking = (u > current[None, :]) & (u > worst[:, None])
    blocking[assign, np.arange(S)] = False
    return not blocking.any()


def enumerate_stable(market, utilities):
    """All stable matchings, found by checking every feasible assignment."""
    u = utilities.u if isinstance(utilities, UtilityRealization) else np.asarray(utilities)
    u = np.asarray(u, dtype=np.float64)
    count = n_feasible_assignments(market.quotas, market.n_startups)
    if count > ENUMERATION_GUARD:
        raise ConfigurationError(
            f"market {market.id!r} has {count} feasible assignments; "
            f"enumeration is capped at {ENUMERATION_GUARD}"
        )
    stable = []
    for assign in iter_feasible_assignments(market.quotas, market.n_startups):
        if _stable_assignment(u, assign):
            stable.append(matching_from_indices(market, assign))
    return stable


def mc_matching_probability(market, matching, params, n_draws, seed):
    """Frequency with which fresh noise reproduces the observed matching."""
    if n_draws < 1:
        raise ConfigurationError("n_draws must be positive")
    target = matching_to_indices(market, matching)
    ubar = deterministic_utility(market, params)
    quotas = market.quotas
    A, S = ubar.shape
    hits = 0
    done = 0
    chunk_index = 0
    while done < n_draws:
        size = min(CHUNK, n_draws - done)
        rng = rng_for(seed, PURPOSE_ORACLE, market.id, "mc", chunk_index)
        eps = rng.standard_normal((size, A, S))
        assigns = _kernels.greedy_assign_batch(ubar, quotas, eps)
        hits += int((assigns == target[None, :]).all(axis=1).sum())
        done += size
        chunk_index += 1
    p = hits / n_draws
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n_draws)
    return p, se


def rejection_conditional_moments(market, matching, params, error_params, n_draws, seed):
    """Conditional means of both shocks for each matched pair, by rejection.

    Draws the full pair-level (match shock, outcome shock) matrices jointly,
    keeps only draws whose stable matching equals the observed one, and
    averages at the matched pairs.  Returns a dict of per-startup arrays.
    """
    target = matching_to_indices(market, matching)
    ubar = deterministic_utility(market, params)
    quotas = market.quotas
    A, S = ubar.shape
    rho, sigma = error_params.rho, error_params.sigma
    mix = sigma * math.sqrt(1.0 - rho**2)
    cols = np.arange(S)
    n_acc = 0
    sums = np.zeros((2, S))
    sumsq = np.zeros((2, S))
    done = 0
    chunk_index = 0
    while done < n_draws:
        size = min(CHUNK, n_draws - done)
        rng = rng_for(seed, PURPOSE_ORACLE, market.id, "rejection", chunk_index)
        eps = rng.standard_normal((size, A, S))
        noise = rng.standard_normal((size, A, S))
        assigns = _kernels.greedy_assign_batch(ubar, quotas, eps)
        keep = (assigns == target[None, :]).all(axis=1)
        if keep.any():
            eps_m = eps[keep][:, target, cols]
            eta_m = rho * sigma * eps_m + mix * noise[keep][:, target, cols]
            n_acc += int(keep.sum())
            sums[0] += eps_m.sum(axis=0)
            sums[1] += eta_m.sum(axis=0)
            sumsq[0] += (eps_m**2).sum(axis=0)
            sumsq[1] += (eta_m**2).sum(axis=0)
        done += size
        chunk_index += 1
    if n_acc < MIN_ACCEPTED:
        raise NumericError(
            f"only {n_acc} of {n_draws} draws reproduced the matching in market "
            f"{market.id!r} (acceptance rate {n_acc / n_draws:.2e}); need {MIN_ACCEPTED}"
        )
    mean = sums / n_acc
    var = np.maximum(sumsq / n_acc - mean**2, 0.0)
    se = np.sqrt(var / n_acc)
    return {
        "eps_mean": mean[0],
        "eta_mean": mean[1],
        "eps_se": se[0],
        "eta_se": se[1],
        "n_accepted": n_acc,
        "acceptance_rate": n_acc / n_draws,
    }


@dataclass
class OracleReport:
    """Container assembled by the validation suite."""

    n_stable_found: int = 0
    stable_matchings: list = field(default_factory=list)
    mc_probability: tuple = (None, None)
    conditional_moments: dict = field(default_factory=dict)
