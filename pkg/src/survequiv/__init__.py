"""Parametric survival curves under non-proportional hazards.

Censored maximum likelihood fits, pointwise confidence bands for the survival
difference and the log hazard ratio, non-inferiority and equivalence tests,
Kaplan-Meier and log-rank baselines, and a Monte-Carlo study harness.
"""

from .bands import (
    BandTarget,
    ConfidenceBand,
    bootstrap_replicates,
    bootstrap_variance,
    delta_variance,
    pointwise_band,
    standard_normal_quantile,
    target_value,
)
from .distributions import (
    FAMILIES,
    evaluate,
    get_family,
    grad_log_hazard,
    grad_survival,
    quantile,
    sample,
)
from .equivtest import (
    Margin,
    TestDecision,
    TimeSpec,
    equivalence_test,
    interval_test,
    noninferiority_onset,
    noninferiority_test,
)
from .exceptions import DomainError, InputError, NumericalError
from .inference import (
    FitResult,
    ParametricSurvival,
    SurvivalSample,
    censoring_log_likelihood,
    fit_censoring,
    fit_mle,
    log_likelihood,
    observed_information,
    select_model,
)
from .nonparametric import KaplanMeier, kaplan_meier, km_difference_band, logrank_test
from .simulation import (
    ScenarioConfig,
    StudyResult,
    calibrate_uniform_censoring,
    coverage_study,
    generate_pair,
    rejection_study,
    scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BandTarget",
    "ConfidenceBand",
    "DomainError",
    "FAMILIES",
    "FitResult",
    "InputError",
    "KaplanMeier",
    "Margin",
    "NumericalError",
    "ParametricSurvival",
    "ScenarioConfig",
    "StudyResult",
    "SurvivalSample",
    "TestDecision",
    "TimeSpec",
    "bootstrap_replicates",
    "bootstrap_variance",
    "calibrate_uniform_censoring",
    "censoring_log_likelihood",
    "coverage_study",
    "delta_variance",
    "equivalence_test",
    "evaluate",
    "fit_censoring",
    "fit_mle",
    "generate_pair",
    "get_family",
    "grad_log_hazard",
    "grad_survival",
    "interval_test",
    "kaplan_meier",
    "km_difference_band",
    "log_likelihood",
    "logrank_test",
    "noninferiority_onset",
    "noninferiority_test",
    "observed_information",
    "pointwise_band",
    "quantile",
    "rejection_study",
    "sample",
    "scenario",
    "select_model",
    "standard_normal_quantile",
    "target_value",
]
