"""Stable matching under aligned preferences.

Both sides rank pairs by the same total value, so the unique stable
matching is found greedily: repeatedly match the highest-valued remaining
pair among accelerators with spare seats and unmatched startups.  A pair
chosen this way can never be blocked later, because every pair that could
tempt either party away carries a larger value and was already considered.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericError, ValidationFailure
from .model import matching_from_indices, matching_to_indices, validate_market


@dataclass(frozen=True)
class UtilityRealization:
    """One realized accelerator-by-startup table of total pair values."""

    u: np.ndarray


def _utility_matrix(market, utilities):
    u = utilities.u if isinstance(utilities, UtilityRealization) else np.asarray(utilities)
    u = np.asarray(u, dtype=np.float64)
    expected = (market.n_accelerators, market.n_startups)
    if u.shape != expected:
        raise ValidationFailure(f"utility table has shape {u.shape}, expected {expected}")
    if not np.all(np.isfinite(u)):
        raise NumericError("utility table contains non-finite values")
    return u


def solve_stable(market, utilities):
    """Compute the unique stable matching for the given pair values.

    Exact ties are broken by (accelerator index, startup index); they have
    probability zero under continuous noise but occur in hand-built tests.
    """
    violations = validate_market(market)
    if violations:
        raise ValidationFailure(f"invalid market {market.id!r}", violations)
    u = _utility_matrix(market, utilities)
    assign = _kernels.greedy_assign(u, market.quotas)
    return matching_from_indices(market, assign)


def find_blocking_pairs(market, utilities, matching):
    """All pairs (accelerator, startup) that would break the matching.

    A pair blocks when both parties strictly gain: the startup's value
    exceeds its current match value, and the accelerator's value for the
    startup exceeds the worst value in its current cohort.
    """
    u = _utility_matrix(market, utilities)
    assign = matching_to_indices(market, matching)
    S = market.n_startups
    current = u[assign, np.arange(S)]
    worst = np.array([u[a, assign == a].min() for a in range(market.n_accelerators)])
    blocking = (u > current[None, :]) & (u > worst[:, None])
    blocking[assign, np.arange(S)] = False
    pairs = [
        (market.accelerator_ids[a], market.startup_ids[s]) for a, s in zip(*np.nonzero(blocking))
    ]
    return pairs


def is_stable(market, utilities, matching):
    return not find_blocking_pairs(market, utilities, matching)
