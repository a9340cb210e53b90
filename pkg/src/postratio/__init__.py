"""Posterior ratio estimation from two likelihoods and two prior sample sets."""

from .detection import (
    DetectionConfig,
    DetectionSeries,
    autocorr_distance,
    plugin_score,
    pre_score,
    roc_auc,
    roc_points,
    sliding_scores,
    sst_distance,
)
from .dual import DualResult, dual_primal_gap, radius_schedule, residual_eqn, solve_dual
from .errors import (
    DataFileError,
    DegenerateEvidenceError,
    DegenerateInputError,
    InfeasibleConstraintError,
    InvalidBlackboxError,
    InvalidInputError,
    PostRatioError,
    SingularInformationError,
    SolverFailureError,
)
from .estimator import (
    FitResult,
    ObjectiveEval,
    evaluate,
    fit,
    gradient,
    hessian,
    objective,
)
from .explain import (
    LinearExplanation,
    direction_cosine,
    extract_local_linear,
    surrogate_baseline,
)
from .features import FeatureMap
from .inference import (
    AsymptoticReport,
    ConsistencyDiagnostics,
    asymptotic_report,
    chi2_quantile,
    consistency_diagnostics,
    ellipse_coverage,
)
from .likelihood import (
    BlackboxLikelihood,
    GaussianLinearLikelihood,
    LogLikelihood,
    UnitLikelihood,
)
from .problem import (
    PreProblem,
    PriorSampleSet,
    WeightVector,
    p_side_weights,
    q_side_weights,
    softmax_weights,
)
from .simulation import (
    ExperimentReport,
    ExperimentSpec,
    gen_ar_sequence,
    gen_prior_bank,
    run_consistency_experiment,
    run_detection_experiment,
    run_experiment,
    run_extraction_experiment,
    run_normality_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticReport",
    "BlackboxLikelihood",
    "ConsistencyDiagnostics",
    "DataFileError",
    "DegenerateEvidenceError",
    "DegenerateInputError",
    "DetectionConfig",
    "DetectionSeries",
    "DualResult",
    "ExperimentReport",
    "ExperimentSpec",
    "FeatureMap",
    "FitResult",
    "GaussianLinearLikelihood",
    "InfeasibleConstraintError",
    "InvalidBlackboxError",
    "InvalidInputError",
    "LinearExplanation",
    "LogLikelihood",
    "ObjectiveEval",
    "PostRatioError",
    "PreProblem",
    "PriorSampleSet",
    "SingularInformationError",
    "SolverFailureError",
    "UnitLikelihood",
    "WeightVector",
    "asymptotic_report",
    "autocorr_distance",
    "chi2_quantile",
    "consistency_diagnostics",
    "direction_cosine",
    "dual_primal_gap",
    "ellipse_coverage",
    "evaluate",
    "extract_local_linear",
    "fit",
    "gen_ar_sequence",
    "gen_prior_bank",
    "gradient",
    "hessian",
    "objective",
    "p_side_weights",
    "plugin_score",
    "pre_score",
    "q_side_weights",
    "radius_schedule",
    "residual_eqn",
    "roc_auc",
    "roc_points",
    "run_consistency_experiment",
    "run_detection_experiment",
    "run_experiment",
    "run_extraction_experiment",
    "run_normality_experiment",
    "sliding_scores",
    "softmax_weights",
    "solve_dual",
    "sst_distance",
    "surrogate_baseline",
]
