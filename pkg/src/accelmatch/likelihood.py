"""Stability likelihood of an observed matching.

Conditional on the noise of the matched pairs, each unmatched pair (a, s)
stays passive with probability Phi of its blocking threshold: the smallest
noise value at which the pair would tempt both parties away.  The product
of those probabilities over unmatched pairs, integrated over the matched
noise by Monte Carlo, is the likelihood of observing the matching.

Draws are keyed by (seed, market id), so the same market sees the same
noise within one run: the simulated objective is then a smooth,
deterministic function of the coefficients, and bootstrap resamples reuse
each market's draws.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

from . import _kernels
from ._util import PURPOSE_DRAWS, rng_for
from .errors import ConfigurationError
from .model import deterministic_utility, matching_to_indices

DEFAULT_DRAWS = 10_000


@dataclass(frozen=True)
class EpsDraw:
    """One simulated noise vector for the matched pairs of a market."""

    eps_matched: np.ndarray  # (S,), startup order
    draw_id: int = 0


def draws_for_market(market, n_draws, seed):
    """Matched-pair noise draws, (n_draws, S) standard normal."""
    if n_draws < 1:
        raise ConfigurationError(f"n_draws must be at least 1, got {n_draws}")
    rng = rng_for(seed, PURPOSE_DRAWS, market.id)
    return rng.standard_normal((int(n_draws), market.n_startups))


def blocking_threshold(market, matching, params, eps_matched, accelerator_id, startup_id):
    """Threshold noise above which the given unmatched pair blocks.

    The pair blocks when its value beats both the startup's current match
    value and the worst value in the accelerator's cohort; the threshold is
    therefore the larger of those two bars, net of the pair's deterministic
    value.
    """
    assign = matching_to_indices(market, matching)
    a = market.accelerator_index(accelerator_id)
    s = market.startup_index(startup_id)
    if assign[s] == a:
        raise ValueError(
            f"({accelerator_id!r}, {startup_id!r}) is matched; thresholds are "
            "defined for unmatched pairs only"
        )
    eps_matched = np.asarray(eps_matched, dtype=np.float64)
    if eps_matched.shape != (market.n_startups,):
        raise ConfigurationError(
            f"eps_matched has shape {eps_matched.shape}, expected ({market.n_startups},)"
        )
    ubar = deterministic_utility(market, params)
    u_matched = ubar[assign, np.arange(market.n_startups)] + eps_matched
    cohort_worst = u_matched[assign == a].min()
    return float(max(u_matched[s], cohort_worst) - ubar[a, s])


def log_stability_prob(market, matching, params, eps_draw):
    """Log probability that no pair blocks, given the matched-pair noise."""
    eps = eps_draw.eps_matched if isinstance(eps_draw, EpsDraw) else np.asarray(eps_draw)
    assign = matching_to_indices(market, matching)
    ubar = deterministic_utility(market, params)
    g = _kernels.stability_logprob_batch(ubar, assign, eps.reshape(1, -1))
    return float(g[0])


def log_mean_exp(values, axis=None):
    values = np.asarray(values)
    n = values.shape[axis] if axis is not None else values.size
    return logsumexp(values, axis=axis) - np.log(n)


def simulated_log_likelihood(markets, matchings, params, n_draws=DEFAULT_DRAWS, seed=0):
    """Sum over markets of the log Monte-Carlo average stability probability.

    Deterministic for a fixed seed; nonpositive because every per-draw term
    is a log probability.
    """
    if n_draws < 1:
        raise ConfigurationError(f"n_draws must be at least 1, got {n_draws}")
    if len(markets) != len(matchings):
        raise ConfigurationError("markets and matchings must align one-to-one")
    total = 0.0
    for market, matching in zip(markets, matchings):
        eps = draws_for_market(market, n_draws, seed)
        assign = matching_to_indices(market, matching)
        ubar = deterministic_utility(market, params)
        g = _kernels.stability_logprob_batch(ubar, assign, eps)
        total += float(log_mean_exp(g))
    return total


# ---------------------------------------------------------------------------
# Prepared evaluation path used by the estimator and the correction stage
# ---------------------------------------------------------------------------


@dataclass
class PreparedMarket:
    """Numeric working form of (market, matching) for repeated evaluation."""

    market_id: str
    design: np.ndarray  # (P, A, S) covariate tensor in coefficient order
    assign: np.ndarray  # (S,) accelerator index per startup
    draws: np.ndarray  # (T, S) matched-pair noise

    @property
    def n_startups(self):
        return self.design.shape[2]


def prepare_market(market, matching, coefficient_names, n_draws, seed):
    missing = [n for n in coefficient_names if n not in market.covariates]
    if missing:
        raise ConfigurationError(f"market {market.id!r} lacks covariates {missing}")
    design = np.stack([market.covariates[n] for n in coefficient_names])
    return PreparedMarket(
        market_id=market.id,
        design=design,
        assign=matching_to_indices(market, matching),
        draws=draws_for_market(market, n_draws, seed),
    )


def prepared_ubar(prepared, beta_vec):
    return np.tensordot(beta_vec, prepared.design, axes=1)


def prepared_g(prepared, beta_vec):
    """Per-draw log stability probabilities, (T,)."""
    ubar = prepared_ubar(prepared, beta_vec)
    return _kernels.stability_logprob_batch(ubar, prepared.assign, prepared.draws)


def prepared_loglik(prepared_markets, beta_vec):
    return sum(float(log_mean_exp(prepared_g(p, beta_vec))) for p in prepared_markets)


class PreparedPool:
    """Concatenated buffers for evaluating many markets in one kernel call.

    Startups and accelerators get global indices; unmatched pairs are laid
    out per market.  One evaluation is then two small matrix products plus a
    single pass over all (draw, unmatched pair) combinations, which is what
    the optimizer spends its time on.
    """

    def __init__(self, prepared_markets):
        if not prepared_markets:
            raise ConfigurationError("no markets to evaluate")
        T = prepared_markets[0].draws.shape[0]
        x_matched, x_pair, assign_global = [], [], []
        pair_a, pair_s, offsets = [], [], [0]
        acc_offset = 0
        startup_offset = 0
        n_pairs = 0
        for p in prepared_markets:
            if p.draws.shape[0] != T:
                raise ConfigurationError("all markets must use the same number of draws")
            P, A, S = p.design.shape
            cols = np.arange(S)
            x_matched.append(p.design[:, p.assign, cols])
            assign_global.append(p.assign + acc_offset)
            a_un, s_un = np.nonzero(p.assign[None, :] != np.arange(A)[:, None])
            x_pair.append(p.design[:, a_un, s_un])
            pair_a.append(a_un + acc_offset)
            pair_s.append(s_un + startup_offset)
            n_pairs += len(a_un)
            offsets.append(n_pairs)
            acc_offset += A
            startup_offset += S
        self.n_markets = len(prepared_markets)
        self.n_draws = T
        self.n_acc_total = acc_offset
        self.x_matched = np.concatenate(x_matched, axis=1)
        self.x_pair = (
            np.concatenate(x_pair, axis=1)
            if n_pairs
            else np.zeros((self.x_matched.shape[0], 0))
        )
        self.assign_global = np.concatenate(assign_global)
        self.pair_a = np.concatenate(pair_a) if n_pairs else np.zeros(0, dtype=np.int64)
        self.pair_s = np.concatenate(pair_s) if n_pairs else np.zeros(0, dtype=np.int64)
        self.pair_offsets = np.asarray(offsets, dtype=np.int64)
        self.draws = np.concatenate([p.draws for p in prepared_markets], axis=1)

    def per_draw_logprobs(self, beta_vec):
        """(n_markets, n_draws) log stability probabilities."""
        beta_vec = np.asarray(beta_vec, dtype=np.float64)
        return _kernels.stability_logprob_multi(
            beta_vec @ self.x_matched,
            self.assign_global,
            self.draws,
            self.pair_a,
            self.pair_s,
            beta_vec @ self.x_pair,
            self.pair_offsets,
            self.n_acc_total,
        )

    def loglik(self, beta_vec):
        g = self.per_draw_logprobs(beta_vec)
        return float((logsumexp(g, axis=1) - np.log(self.n_draws)).sum())


__all__ = [
    "DEFAULT_DRAWS",
    "EpsDraw",
    "PreparedMarket",
    "PreparedPool",
    "blocking_threshold",
    "draws_for_market",
    "log_mean_exp",
    "log_ndtr",
    "log_stability_prob",
    "prepare_market",
    "prepared_g",
    "prepared_loglik",
    "prepared_ubar",
    "simulated_log_likelihood",
]
