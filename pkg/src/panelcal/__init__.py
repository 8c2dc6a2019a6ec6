"""Calibration of panel assessment scores with declared confidences.

Infers unbiased object values from panel scores by jointly fitting
per-object values and per-assessor biases, weighted by each assessment's
declared confidence, with spectral robustness bounds, posterior
uncertainties, and Bayesian comparison against simpler aggregation rules.
"""

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    ConditionKind,
    DegeneracyCondition,
    Method,
    apply_condition_shift,
    estimate_noise_scale,
    fit,
    fit_cwc,
    fit_iba,
    fit_sa,
    solve_full_system,
    solve_reduced_system,
)
from .errors import (
    DataError,
    DisconnectedGraphError,
    InsufficientDataError,
    NumericalError,
    PanelCalError,
)
from .evidence import (
    EvidenceReport,
    PriorConfig,
    compare_models,
    log_evidence_cwc,
    log_evidence_iba,
    log_evidence_sa,
)
from .model import (
    Assessment,
    AssessmentGraph,
    ConfidenceLevel,
    GraphAggregates,
    Level,
    TransformVariant,
    aggregates,
    confidence_from_level,
    confidence_from_uncertainty,
    connected_components,
    is_connected,
    transform_bounded_to_real,
    transform_confidence,
    transform_real_to_bounded,
)
from .posterior import (
    PosteriorReport,
    posterior_per_component,
    posterior_sigma_cwc,
    posterior_sigma_sa,
)
from .robustness import (
    RobustnessReport,
    build_dtd,
    build_m,
    mu2,
    perturbation_bound,
    results_norm,
    scores_norm,
)
from .simulation import (
    PanelTruth,
    SimulationConfig,
    TrialOutcome,
    generate_panel,
    run_experiment,
    run_sweep,
)

__all__ = [
    "Assessment",
    "AssessmentGraph",
    "CalibrationResult",
    "ConfidenceLevel",
    "ConditionKind",
    "DataError",
    "DegeneracyCondition",
    "DisconnectedGraphError",
    "EvidenceReport",
    "GraphAggregates",
    "InsufficientDataError",
    "Level",
    "Method",
    "NumericalError",
    "PanelCalError",
    "PanelTruth",
    "PosteriorReport",
    "PriorConfig",
    "RobustnessReport",
    "SimulationConfig",
    "TransformVariant",
    "TrialOutcome",
    "aggregates",
    "apply_condition_shift",
    "build_dtd",
    "build_m",
    "compare_models",
    "confidence_from_level",
    "confidence_from_uncertainty",
    "connected_components",
    "estimate_noise_scale",
    "fit",
    "fit_cwc",
    "fit_iba",
    "fit_sa",
    "generate_panel",
    "is_connected",
    "log_evidence_cwc",
    "log_evidence_iba",
    "log_evidence_sa",
    "mu2",
    "perturbation_bound",
    "posterior_per_component",
    "posterior_sigma_cwc",
    "posterior_sigma_sa",
    "results_norm",
    "run_experiment",
    "run_sweep",
    "scores_norm",
    "solve_full_system",
    "solve_reduced_system",
    "transform_bounded_to_real",
    "transform_confidence",
    "transform_real_to_bounded",
]
