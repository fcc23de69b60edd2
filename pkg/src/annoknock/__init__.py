"""Annotation-informed knockoff variable selection.

Knockoff-filter inference with per-covariate penalty weights learned from
annotation matrices, for individual-level designs and for marginal z-scores
plus an LD matrix, with a simulation harness for power/FDR comparisons.
"""

__version__ = "0.1.0"

from .adaptive_lasso import (
    FitResult,
    LassoProblem,
    fit_individual,
    fit_summary,
    kkt_violation,
    lambda_max,
)
from .anno_weights import PenaltyState, compute_phi, maximize_lambda, objective
from .annogk_pipeline import (
    PseudoSplit,
    annogk_fit,
    ghostknockoff_fit,
    make_pseudo_split,
    pseudo_validation_score,
)
from .annokn_pipeline import (
    PipelineConfig,
    PipelineResult,
    annokn_fit,
    annokn_lite_fit,
    cross_validate,
    plain_knockoff_fit,
)
from .data_model import (
    AnnotationMatrix,
    LdMatrix,
    StandardizedMatrix,
    SummaryStats,
    annotations_from_array,
    empty_annotations,
    ld_from_array,
    load_annotations,
    load_design,
    load_ld,
    load_summary_stats,
    standardize,
    standardize_vector,
)
from .knockoff_filter import (
    FeatureStats,
    SelectionResult,
    fdp_at,
    knockoff_threshold,
    lcd_stats,
)
from .knockoff_gen import (
    KnockoffModel,
    SigmaM,
    build_knockoff_model,
    build_sigma_m,
    sample_knockoff_zscores,
    sample_knockoffs,
    solve_d_coordinate,
    solve_d_equicorrelated,
)
from .simulation import (
    SimMetrics,
    SimScenario,
    cluster_representatives,
    generate_ar1,
    run_comparison,
)

__all__ = [
    "AnnotationMatrix",
    "FeatureStats",
    "FitResult",
    "KnockoffModel",
    "LassoProblem",
    "LdMatrix",
    "PenaltyState",
    "PipelineConfig",
    "PipelineResult",
    "PseudoSplit",
    "SelectionResult",
    "SigmaM",
    "SimMetrics",
    "SimScenario",
    "StandardizedMatrix",
    "SummaryStats",
    "annogk_fit",
    "annokn_fit",
    "annotations_from_array",
    "annokn_lite_fit",
    "build_knockoff_model",
    "build_sigma_m",
    "cluster_representatives",
    "compute_phi",
    "cross_validate",
    "fdp_at",
    "fit_individual",
    "fit_summary",
    "generate_ar1",
    "ghostknockoff_fit",
    "kkt_violation",
    "knockoff_threshold",
    "lambda_max",
    "ld_from_array",
    "lcd_stats",
    "load_annotations",
    "load_design",
    "load_ld",
    "load_summary_stats",
    "make_pseudo_split",
    "maximize_lambda",
    "objective",
    "plain_knockoff_fit",
    "pseudo_validation_score",
    "run_comparison",
    "sample_knockoff_zscores",
    "sample_knockoffs",
    "solve_d_coordinate",
    "empty_annotations",
    "solve_d_equicorrelated",
    "standardize",
    "standardize_vector",
]
