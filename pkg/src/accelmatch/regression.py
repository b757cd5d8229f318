"""Second-stage outcome regressions with the imputed correction term.

Least squares on matched-pair outcomes (a linear probability model when the
outcome is binary), with categorical fixed effects absorbed through
drop-first dummy encoding and the correction term entering as one more
regressor.  Inference is by resampling observations (or whole markets)
while holding the first stage fixed, so the matching problem is never
re-solved.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from ._util import PURPOSE_REGRESSION, rng_for
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

INTERCEPT = "const"


@dataclass(frozen=True)
class FilterClause:
    field: str
    op: str
    value: object

    _OPS = ("==", "!=", ">", ">=", "<", "<=", "between", "in")

    def apply(self, df):
        if self.field not in df.columns:
            raise ConfigurationError(f"filter references unknown column {self.field!r}")
        col = df[self.field]
        if self.op == "==":
            return col == self.value
        if self.op == "!=":
            return col != self.value
        if self.op == ">":
            return col > self.value
        if self.op == ">=":
            return col >= self.value
        if self.op == "<":
            return col < self.value
        if self.op == "<=":
            return col <= self.value
        if self.op == "between":
            lo, hi = self.value
            return (col >= lo) & (col <= hi)
        if self.op == "in":
            return col.isin(list(self.value))
        raise ConfigurationError(f"unknown filter op {self.op!r} (use one of {self._OPS})")


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str
    regressors: tuple
    include_correction: bool = True
    fixed_effects: tuple = ()
    sample_filter: tuple = ()
    correction_name: str = "correction"

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "regressors": list(self.regressors),
            "include_correction": self.include_correction,
            "fixed_effects": list(self.fixed_effects),
            "sample_filter": [
                {"field": c.field, "op": c.op, "value": c.value} for c in self.sample_filter
            ],
            "correction_name": self.correction_name,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                outcome=str(doc["outcome"]),
                regressors=tuple(str(r) for r in doc["regressors"]),
                include_correction=bool(doc.get("include_correction", True)),
                fixed_effects=tuple(str(f) for f in doc.get("fixed_effects", ())),
                sample_filter=tuple(
                    FilterClause(str(c["field"]), str(c["op"]), c["value"])
                    for c in doc.get("sample_filter", ())
                ),
                correction_name=str(doc.get("correction_name", "correction")),
            )
        except KeyError as exc:
            raise ConfigurationError(f"regression spec is missing field {exc}") from None


@dataclass
class SecondStageFit:
    alpha_hat: dict
    boot_se: dict
    n_obs: int
    r_squared: float
    residuals: np.ndarray = field(repr=False, default=None)
    boot_estimates: pd.DataFrame = field(repr=False, default=None)
    n_boot_skipped: int = 0
    dropped_fe_levels: tuple = ()
    tests: list = field(default_factory=list)

    @property
    def coefficient_names(self):
        return tuple(self.alpha_hat)


def merge_corrections(outcomes, corrections, name):
    """Attach the correction column to the outcome table by (market, startup)."""
    if hasattr(corrections, "to_frame"):
        corrections = corrections.to_frame()
    cols = corrections[["market_id", "startup_id", "eps_hat"]].rename(columns={"eps_hat": name})
    merged = outcomes.merge(cols, on=["market_id", "startup_id"], how="left", validate="m:1")
    if merged[name].isna().any():
        missing = merged.loc[merged[name].isna(), ["market_id", "startup_id"]]
        raise ConfigurationError(
            f"correction missing for {len(missing)} observations, "
            f"first: {missing.iloc[0].to_dict()}"
        )
    return merged


def _apply_filters(df, spec):
    for clause in spec.sample_filter:
        df = df[clause.apply(df)]
    if len(df) == 0:
        raise ConfigurationError("sample filter removed every observation")
    return df


def build_design(outcomes, corrections, spec):
    """Design matrix, outcome vector, and column names for a spec.

    Fixed-effect categories are dummy-encoded with the first (sorted) level
    dropped; levels that vanish from the estimation sample are dropped with
    a warning so the matrix stays full rank.
    """
    df = outcomes
    if spec.include_correction:
        if corrections is None:
            raise ConfigurationError("spec includes the correction term but none was given")
        df = merge_corrections(df, corrections, spec.correction_name)
    df = _apply_filters(df, spec)

    missing = [c for c in (spec.outcome, *spec.regressors) if c not in df.columns]
    if missing:
        raise ConfigurationError(f"outcome table lacks columns {missing}")

    names = [INTERCEPT]
    columns = [np.ones(len(df))]
    for r in spec.regressors:
        names.append(r)
        columns.append(df[r].to_numpy(dtype=float))
    if spec.include_correction:
        names.append(spec.correction_name)
        columns.append(df[spec.correction_name].to_numpy(dtype=float))
    dropped = []
    for fe in spec.fixed_effects:
        if fe not in df.columns:
            raise ConfigurationError(f"fixed-effect column {fe!r} not in outcome table")
        levels = sorted(map(str, df[fe].unique()))
        col = df[fe].astype(str)
        for level in levels[1:]:
            dummy = (col == level).to_numpy(dtype=float)
            if dummy.sum() == 0:
                dropped.append(f"{fe}={level}")
                continue
            names.append(f"{fe}={level}")
            columns.append(dummy)
    if dropped:
        logger.warning("dropping empty fixed-effect levels: %s", ", ".join(dropped))
    X = np.column_stack(columns)
    y = df[spec.outcome].to_numpy(dtype=float)
    return X, y, names, tuple(dropped), df


def _offending_columns(X, names):
    """Name the smallest trailing set of columns that break full rank."""
    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in np.nonzero(norms == 0)[0]]
    if zero:
        return zero
    Xs = X / norms
    _, R, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > diag[0] * 1e-10).sum())
    return [names[j] for j in sorted(piv[rank:])]


class _RankDeficient(Exception):
    pass


def _ols(X, y):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise _RankDeficient
    fitted = X @ beta
    resid = y - fitted
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sst if sst > 0 else 0.0
    return beta, resid, r2


def fit_second_stage(outcomes, corrections, spec):
    """Least-squares fit of the outcome spec; collinear inputs are named."""
    X, y, names, dropped, _ = build_design(outcomes, corrections, spec)
    if len(y) < X.shape[1] + 1:
        raise ConfigurationError(
            f"{len(y)} observations cannot support {X.shape[1]} coefficients"
        )
    try:
        beta, resid, r2 = _ols(X, y)
    except _RankDeficient:
        raise ConfigurationError(
            f"collinear regressors: {_offending_columns(X, names)}"
        ) from None
    return SecondStageFit(
        alpha_hat={n: float(b) for n, b in zip(names, beta)},
        boot_se={},
        n_obs=len(y),
        r_squared=r2,
        residuals=resid,
        dropped_fe_levels=dropped,
    )


def bootstrap_second_stage(
    outcomes, corrections, spec, n_boot=500, seed=0, cluster_by_market=False
):
    """Bootstrap SEs for the second stage, first stage held fixed.

    Observations are resampled with replacement (startup level by default;
    whole markets when ``cluster_by_market``).  Rank-deficient resamples are
    skipped and counted.
    """
    if n_boot < 2:
        raise ConfigurationError(f"n_boot must be at least 2, got {n_boot}")
    X, y, names, _, df = build_design(outcomes, corrections, spec)
    n = len(y)
    market_rows = None
    if cluster_by_market:
        ids = df["market_id"].to_numpy()
        unique = sorted(map(str, set(ids)))
        market_rows = {m: np.nonzero(ids.astype(str) == m)[0] for m in unique}
        unique = list(market_rows)
    rows = []
    skipped = 0
    for b in range(n_boot):
        rng = rng_for(seed, PURPOSE_REGRESSION, b)
        if cluster_by_market:
            picks = rng.integers(0, len(unique), size=len(unique))
            idx = np.concatenate([market_rows[unique[p]] for p in picks])
        else:
            idx = rng.integers(0, n, size=n)
        try:
            beta, _, _ = _ols(X[idx], y[idx])
        except _RankDeficient:
            skipped += 1
            continue
        rows.append(beta)
    if len(rows) < 2:
        raise ConfigurationError(
            f"only {len(rows)} of {n_boot} bootstrap resamples were usable"
        )
    estimates = pd.DataFrame(np.asarray(rows), columns=names)
    se = {n_: float(estimates[n_].std(ddof=1)) for n_ in names}
    return se, estimates, skipped


def run_regression(
    outcomes, corrections, spec, n_boot=500, seed=0, cluster_by_market=False
):
    """Fit plus bootstrap, with replication estimates attached for tests."""
    fit = fit_second_stage(outcomes, corrections, spec)
    se, estimates, skipped = bootstrap_second_stage(
        outcomes, corrections, spec, n_boot=n_boot, seed=seed, cluster_by_market=cluster_by_market
    )
    fit.boot_se = se
    fit.boot_estimates = estimates
    fit.n_boot_skipped = skipped
    return fit


def linear_combo_test(fit, names, weights):
    """Estimate and bootstrap SE of a weighted sum of coefficients.

    The SE comes from applying the same weights to every bootstrap
    replication, so it respects the joint distribution of the estimates.
    """
    if len(names) != len(weights):
        raise ConfigurationError("names and weights must have the same length")
    unknown = [n for n in names if n not in fit.alpha_hat]
    if unknown:
        raise ConfigurationError(f"unknown coefficients {unknown}")
    if fit.boot_estimates is None:
        raise ConfigurationError("fit carries no bootstrap replications; run the bootstrap first")
    weights = np.asarray(weights, dtype=float)
    estimate = float(sum(w * fit.alpha_hat[n] for n, w in zip(names, weights)))
    combo = fit.boot_estimates[list(names)].to_numpy() @ weights
    return estimate, float(combo.std(ddof=1))
