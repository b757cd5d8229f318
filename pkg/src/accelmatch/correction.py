"""Imputation of the expected matched-pair noise given the observed matching.

For each market, noise vectors for the matched pairs are drawn from the
unconditional normal and reweighted by the stability probability of the
observed matching (self-normalized importance sampling).  The weighted
average per matched pair estimates the conditional mean of that pair's
noise given that the observed matching is the stable one.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._util import ordered_map
from .errors import ConfigurationError, NumericError
from .likelihood import draws_for_market, prepare_market, prepared_g

logger = logging.getLogger(__name__)

ESS_WARN_THRESHOLD = 50.0


@dataclass(frozen=True)
class MarketCorrection:
    market_id: str
    startup_ids: tuple
    accelerator_ids: tuple  # matched accelerator per startup
    eps_hat: np.ndarray  # (S,)
    se: np.ndarray  # (S,) self-normalized importance-sampling SEs
    ess: float
    n_draws: int


@dataclass
class CorrectionTable:
    markets: list

    def eps_hat_for(self, market_id):
        for m in self.markets:
            if m.market_id == market_id:
                return m.eps_hat
        raise ConfigurationError(f"no correction for market {market_id!r}")

    def to_frame(self):
        rows = []
        for m in self.markets:
            for sid, aid, eps in zip(m.startup_ids, m.accelerator_ids, m.eps_hat):
                rows.append(
                    {
                        "market_id": m.market_id,
                        "startup_id": sid,
                        "accelerator_id": aid,
                        "eps_hat": float(eps),
                        "ess": float(m.ess),
                    }
                )
        return pd.DataFrame(rows, columns=["market_id", "startup_id", "accelerator_id", "eps_hat", "ess"])


def _weights_from_g(g):
    """Normalized importance weights from per-draw log stability probabilities."""
    g = np.asarray(g, dtype=float)
    top = g.max()
    if not np.isfinite(top):
        return None
    w = np.exp(g - top)
    total = w.sum()
    if total <= 0.0 or not np.isfinite(total):
        return None
    return w / total


def impute_correction(market, matching, params, n_draws, seed, draws=None):
    """Correction terms for one market's matched pairs.

    ``draws`` overrides the seeded draws (used by tests); by default the
    draws are the estimation draws for the same (seed, market id), keeping
    the two stages consistent.
    """
    names = tuple(params.beta)
    prepared = prepare_market(market, matching, names, 1, seed)
    if draws is None:
        draws = draws_for_market(market, n_draws, seed)
    else:
        draws = np.asarray(draws, dtype=float)
    prepared.draws = draws
    beta_vec = np.array([params.beta[n] for n in names])
    g = prepared_g(prepared, beta_vec)
    w = _weights_from_g(g)
    if w is None:
        raise NumericError(
            f"degenerate importance weights in market {market.id!r}: all stability "
            "probabilities underflowed; raise n_draws or start from a better fit"
        )
    ess = 1.0 / float((w**2).sum())
    if ess < ESS_WARN_THRESHOLD:
        logger.warning(
            "market %s: effective sample size %.1f of %d draws; imputation may be noisy",
            market.id,
            ess,
            draws.shape[0],
        )
    eps_hat = w @ draws
    se = np.sqrt(((w[:, None] * (draws - eps_hat[None, :])) ** 2).sum(axis=0))
    matched_acc = tuple(market.accelerator_ids[a] for a in prepared.assign)
    return MarketCorrection(
        market_id=market.id,
        startup_ids=market.startup_ids,
        accelerator_ids=matched_acc,
        eps_hat=eps_hat,
        se=se,
        ess=ess,
        n_draws=int(draws.shape[0]),
    )


_IMPUTE_CTX = None


def _impute_one(index):
    markets, matchings, params, n_draws, seed = _IMPUTE_CTX
    return impute_correction(markets[index], matchings[index], params, n_draws, seed)


def impute_corrections(markets, matchings, params, n_draws, seed, workers=1):
    """Correction table for a collection of markets (order preserved)."""
    global _IMPUTE_CTX
    if len(markets) != len(matchings):
        raise ConfigurationError("markets and matchings must align one-to-one")
    _IMPUTE_CTX = (list(markets), list(matchings), params, n_draws, seed)
    try:
        results = ordered_map(_impute_one, range(len(markets)), workers)
    finally:
        _IMPUTE_CTX = None
    return CorrectionTable(markets=results)
