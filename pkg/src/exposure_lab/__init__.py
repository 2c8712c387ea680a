"""Design-based estimation of exposure effects under misspecified mappings."""

from .errors import (
    EmptyExposureCell,
    EnumerationInfeasible,
    ExposureLabError,
    InvalidParams,
    MissingCovariates,
    MissingGraph,
    MissingJointProbability,
    NoGroundTruth,
    NotCorrectlySpecified,
    PositivityViolated,
    UndefinedOnSupport,
    UnrealizableExposure,
)
from .scenario import (
    Scenario,
    ValidationReport,
    correctly_specified_units,
    enumerate_omega,
    is_correctly_specified,
    validate_scenario,
)
from .exact import (
    ExposureLaw,
    GroundTruth,
    Moments,
    SpecificationErrors,
    SupportTable,
    build_support,
    compute_exposure_law,
    compute_ground_truth,
    conventional_effect,
    estimator_moments,
    specification_errors,
    tau_contrast,
    variance_estimator_expectation,
)
from .estimators import (
    HAJEK,
    HT,
    EstimatorSpec,
    RealizedData,
    difference_estimate,
    estimate,
    greg_estimate,
    greg_fit,
    hajek_estimate,
    ht_estimate,
)
from .diagnostics import (
    DependenceReport,
    dependence_report,
    design_dependence,
    explainable_error_dependence,
    positivity_norm,
    prediction_dependence,
    total_error_dependence,
    unexplainable_error_dependence,
    variance_bound,
    zero_prob_share,
)
from .variance import (
    BiasDecomposition,
    ConfidenceInterval,
    as_variance_estimate,
    bias_decomposition,
    confidence_interval,
    partial_interference_override,
)
from .montecarlo import (
    McSummary,
    RateTable,
    coverage_experiment,
    rate_experiment,
    resolve_law,
    resolve_tau,
    run_replications,
)
from . import library

__all__ = [name for name in dir() if not name.startswith("_")]
