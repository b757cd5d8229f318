"""accelmatch: two-stage estimation of one-to-many matching markets.

Stage one fits the coefficients of a shared pair value from the observed
stable matchings by simulated maximum likelihood; stage two regresses
post-match outcomes on covariates plus an imputed match-quality correction
term.  Brute-force oracles validate both stages numerically.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .correction import CorrectionTable, impute_correction, impute_corrections
from .errors import AccelmatchError, ConfigurationError, NumericError, ValidationFailure
from .estimation import (
    EstimationConfig,
    FirstStageFit,
    bootstrap_first_stage,
    estimate_first_stage,
    fit_first_stage,
    goodness_of_fit,
)
from .likelihood import (
    EpsDraw,
    blocking_threshold,
    draws_for_market,
    log_stability_prob,
    simulated_log_likelihood,
)
from .matching import UtilityRealization, find_blocking_pairs, is_stable, solve_stable
from .model import (
    Accelerator,
    ErrorParams,
    Market,
    Matching,
    MatchParams,
    PairCovariates,
    Startup,
    build_market,
    build_pair_covariates,
    deterministic_utility,
    load_market,
    load_matchings,
    save_market,
    save_matchings,
    validate_market,
    validate_matching,
)
from .oracles import enumerate_stable, mc_matching_probability, rejection_conditional_moments
from .regression import (
    FilterClause,
    RegressionSpec,
    SecondStageFit,
    bootstrap_second_stage,
    fit_second_stage,
    linear_combo_test,
    run_regression,
)
from .synthdata import FeatureSpec, SimConfig, SimResult, generate

__all__ = [
    "Accelerator",
    "AccelmatchError",
    "ConfigurationError",
    "CorrectionTable",
    "EpsDraw",
    "ErrorParams",
    "EstimationConfig",
    "FeatureSpec",
    "FilterClause",
    "FirstStageFit",
    "Market",
    "MatchParams",
    "Matching",
    "NumericError",
    "PairCovariates",
    "RegressionSpec",
    "SecondStageFit",
    "SimConfig",
    "SimResult",
    "Startup",
    "UtilityRealization",
    "ValidationFailure",
    "blocking_threshold",
    "bootstrap_first_stage",
    "bootstrap_second_stage",
    "build_market",
    "build_pair_covariates",
    "deterministic_utility",
    "draws_for_market",
    "enumerate_stable",
    "estimate_first_stage",
    "find_blocking_pairs",
    "fit_first_stage",
    "fit_second_stage",
    "generate",
    "goodness_of_fit",
    "impute_correction",
    "impute_corrections",
    "is_stable",
    "kernel_backend",
    "linear_combo_test",
    "load_market",
    "load_matchings",
    "log_stability_prob",
    "mc_matching_probability",
    "rejection_conditional_moments",
    "run_regression",
    "save_market",
    "save_matchings",
    "simulated_log_likelihood",
    "solve_stable",
    "validate_market",
    "validate_matching",
]
