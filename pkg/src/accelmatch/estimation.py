"""First-stage estimation: simulated maximum likelihood over the matching model.

The objective reuses one fixed set of noise draws per market (common random
numbers), which makes it a smooth deterministic function of the
coefficients; it is maximized with a derivative-free simplex search plus
restarts and a finite-difference quasi-Newton polish.  Standard errors come
from resampling whole markets with replacement, the independent sampling
unit of the model.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._util import PURPOSE_BOOTSTRAP, ordered_map, rng_for
from .errors import ConfigurationError, NumericError
from .likelihood import DEFAULT_DRAWS, PreparedPool, prepare_market, prepared_ubar
from .model import MatchParams


@dataclass
class EstimationConfig:
    seed: int
    n_draws: int = DEFAULT_DRAWS
    coefficients: tuple = ()  # empty: use every covariate of the first market
    initial_beta: dict = field(default_factory=dict)
    standardize: bool = True
    f_tol: float = 1e-6
    x_tol: float = 1e-5
    max_iter: int = 2000
    n_restarts: int = 2
    polish: bool = True


@dataclass
class FirstStageFit:
    beta_hat: dict
    se: dict
    n_draws: int
    n_boot: int
    seed: int
    converged: bool
    final_loglik: float
    gof_ratio: float = None
    pseudo_r2: float = None
    optimizer: dict = field(default_factory=dict)

    @property
    def coefficient_names(self):
        return tuple(self.beta_hat)

    def params(self):
        return MatchParams(beta=dict(self.beta_hat))

    def to_dict(self):
        return {
            "beta_hat": dict(self.beta_hat),
            "se": dict(self.se) if self.se else {},
            "n_draws": self.n_draws,
            "n_boot": self.n_boot,
            "seed": self.seed,
            "converged": self.converged,
            "final_loglik": self.final_loglik,
            "gof_ratio": self.gof_ratio,
            "pseudo_r2": self.pseudo_r2,
            "optimizer": dict(self.optimizer),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            beta_hat={str(k): float(v) for k, v in doc["beta_hat"].items()},
            se={str(k): float(v) for k, v in doc.get("se", {}).items()},
            n_draws=int(doc["n_draws"]),
            n_boot=int(doc.get("n_boot", 0)),
            seed=int(doc["seed"]),
            converged=bool(doc.get("converged", False)),
            final_loglik=float(doc["final_loglik"]),
            gof_ratio=doc.get("gof_ratio"),
            pseudo_r2=doc.get("pseudo_r2"),
            optimizer=dict(doc.get("optimizer", {})),
        )


def _resolve_names(markets, config):
    names = tuple(config.coefficients) if config.coefficients else markets[0].covariate_names
    if not names:
        raise ConfigurationError("no coefficients to estimate")
    return names


def _check_identified(markets):
    if not any(m.n_accelerators >= 2 for m in markets):
        raise ConfigurationError(
            "every market has a single accelerator: the matching is forced and "
            "the likelihood carries no information about the coefficients"
        )


def _scales(prepared, names, standardize):
    """Per-coefficient scale used to condition the optimizer.

    Continuous covariates (values beyond {0, 1}) are divided by their pooled
    standard deviation; estimates are mapped back before reporting.  The
    likelihood is invariant to covariate centering, so no offset is needed.
    """
    scales = np.ones(len(names))
    if not standardize:
        return scales
    for j in range(len(names)):
        values = np.concatenate([p.design[j].ravel() for p in prepared])
        if np.isin(values, (0.0, 1.0)).all():
            continue
        sd = values.std()
        if sd > 0:
            scales[j] = sd
    return scales


def _neg_loglik_std(pool, scales):
    counter = {"evals": 0}

    def objective(beta_std):
        counter["evals"] += 1
        return -pool.loglik(np.asarray(beta_std) / scales)

    return objective, counter


def _maximize(objective, x0, config):
    """Simplex search with restarts, then an optional quasi-Newton polish.

    Returns the best point ever evaluated, so the final objective can never
    be worse than the starting one.
    """
    options = {
        "xatol": config.x_tol,
        "fatol": config.f_tol,
        "maxiter": config.max_iter,
        "adaptive": True,
    }
    best_x = np.asarray(x0, dtype=float)
    best_f = objective(best_x)
    nm_success = False
    restarts_used = 0
    for attempt in range(1 + max(config.n_restarts, 0)):
        res = minimize(objective, best_x, method="Nelder-Mead", options=options)
        improvement = best_f - res.fun
        if res.fun < best_f:
            best_f, best_x = float(res.fun), np.asarray(res.x)
        nm_success = bool(res.success)
        restarts_used = attempt
        if improvement <= config.f_tol:
            break
    polish_success = False
    if config.polish:
        try:
            res = minimize(objective, best_x, method="L-BFGS-B")
            if np.isfinite(res.fun) and res.fun < best_f:
                best_f, best_x = float(res.fun), np.asarray(res.x)
                polish_success = bool(res.success)
        except (ValueError, FloatingPointError):
            pass
    diagnostics = {
        "method": "nelder-mead+l-bfgs-b" if config.polish else "nelder-mead",
        "restarts_used": restarts_used,
        "nm_success": nm_success,
        "polish_success": polish_success,
        "f_tol": config.f_tol,
        "x_tol": config.x_tol,
        "max_iter": config.max_iter,
    }
    return best_x, best_f, nm_success or polish_success, diagnostics


def _prepare_all(markets, matchings, names, config):
    if len(markets) != len(matchings):
        raise ConfigurationError("markets and matchings must align one-to-one")
    return [
        prepare_market(m, mu, names, config.n_draws, config.seed)
        for m, mu in zip(markets, matchings)
    ]


def estimate_first_stage(markets, matchings, config):
    """Point estimate of the matching coefficients (no standard errors yet)."""
    _check_identified(markets)
    names = _resolve_names(markets, config)
    prepared = _prepare_all(markets, matchings, names, config)
    fit = _estimate_prepared(prepared, names, config)
    return fit


def _estimate_prepared(prepared, names, config, x0_report=None):
    scales = _scales(prepared, names, config.standardize)
    objective, counter = _neg_loglik_std(PreparedPool(prepared), scales)
    if x0_report is None:
        x0_report = np.array([config.initial_beta.get(n, 0.0) for n in names])
    x0 = np.asarray(x0_report) * scales
    best_x, best_f, converged, diagnostics = _maximize(objective, x0, config)
    beta = best_x / scales
    diagnostics["n_objective_evals"] = counter["evals"]
    diagnostics["standardize"] = config.standardize
    return FirstStageFit(
        beta_hat={n: float(b) for n, b in zip(names, beta)},
        se={},
        n_draws=config.n_draws,
        n_boot=0,
        seed=config.seed,
        converged=converged,
        final_loglik=-best_f,
        optimizer=diagnostics,
    )


# --- bootstrap -------------------------------------------------------------

_BOOT_CTX = None


def _bootstrap_one(replication):
    prepared, names, config, beta_start = _BOOT_CTX
    rng = rng_for(config.seed, PURPOSE_BOOTSTRAP, replication)
    idx = rng.integers(0, len(prepared), size=len(prepared))
    sample = [prepared[i] for i in idx]
    boot_config = EstimationConfig(
        seed=config.seed,
        n_draws=config.n_draws,
        coefficients=names,
        standardize=config.standardize,
        f_tol=config.f_tol,
        x_tol=config.x_tol,
        max_iter=config.max_iter,
        n_restarts=0,
        polish=False,
    )
    fit = _estimate_prepared(sample, names, boot_config, x0_report=beta_start)
    return [fit.beta_hat[n] for n in names]


def bootstrap_first_stage(markets, matchings, config, n_boot=500, beta_start=None, workers=1):
    """Market-level bootstrap of the first stage.

    Each replication resamples markets with replacement and re-estimates,
    warm-started at the full-sample estimate and reusing each market's
    draws.  Returns (per-coefficient SE dict, replication estimates array).
    """
    global _BOOT_CTX
    if n_boot < 2:
        raise ConfigurationError(f"n_boot must be at least 2, got {n_boot}")
    if len(markets) < 2:
        raise ConfigurationError("need at least 2 markets to resample")
    _check_identified(markets)
    names = _resolve_names(markets, config)
    prepared = _prepare_all(markets, matchings, names, config)
    if beta_start is None:
        beta_start = np.zeros(len(names))
    else:
        beta_start = np.array([beta_start[n] for n in names])
    _BOOT_CTX = (prepared, names, config, beta_start)
    try:
        rows = ordered_map(_bootstrap_one, range(n_boot), workers)
    finally:
        _BOOT_CTX = None
    estimates = np.asarray(rows)
    se = estimates.std(axis=0, ddof=1)
    return {n: float(v) for n, v in zip(names, se)}, estimates


def goodness_of_fit(markets, matchings, params, eps_hats):
    """Explained-variation summary of the fitted matching model.

    ratio: variance of the deterministic values over matched pairs divided
    by the variance of the imputed noise over matched pairs.  The companion
    pseudo R-squared is ratio / (1 + ratio).
    """
    ubar_matched = []
    for market, matching in zip(markets, matchings):
        prepared_names = tuple(params.beta)
        p = prepare_market(market, matching, prepared_names, 1, 0)
        ubar = prepared_ubar(p, np.array([params.beta[n] for n in prepared_names]))
        ubar_matched.append(ubar[p.assign, np.arange(market.n_startups)])
    ubar_matched = np.concatenate(ubar_matched)
    eps_hat = np.concatenate([np.asarray(e, dtype=float) for e in eps_hats])
    if eps_hat.shape != ubar_matched.shape:
        raise ConfigurationError("one imputed value per matched pair is required")
    var_eps = eps_hat.var(ddof=1) if eps_hat.size > 1 else 0.0
    if var_eps <= 0.0:
        raise NumericError("imputed noise has zero variance; fit ratio undefined")
    ratio = float(ubar_matched.var(ddof=1) / var_eps)
    return ratio, ratio / (1.0 + ratio)


def fit_first_stage(markets, matchings, config, n_boot=500, workers=1):
    """Full first stage: estimate, bootstrap SEs, impute noise, fit ratio."""
    from .correction import impute_corrections

    fit = estimate_first_stage(markets, matchings, config)
    if n_boot >= 2 and len(markets) >= 2:
        se, _ = bootstrap_first_stage(
            markets, matchings, config, n_boot=n_boot, beta_start=fit.beta_hat, workers=workers
        )
        fit.se = se
        fit.n_boot = n_boot
    table = impute_corrections(
        markets, matchings, fit.params(), n_draws=config.n_draws, seed=config.seed, workers=workers
    )
    eps_hats = [table.eps_hat_for(m.id) for m in markets]
    try:
        fit.gof_ratio, fit.pseudo_r2 = goodness_of_fit(markets, matchings, fit.params(), eps_hats)
    except NumericError:
        fit.gof_ratio, fit.pseudo_r2 = None, None
    return fit
