//! Ranking evaluation: AUC, contraction curves and counterfactuals,
//! correlations, and the fixed-effects decomposition.

mod auc;
mod contraction;
mod correlation;
mod counterfactual;
mod fixed_effects;

pub use auc::{auc, auc_se, auc_with_se, AucEstimate};
pub use contraction::{
    assign_bins, contraction_counterfactual, contraction_curve, curves_by_field, rejection_count, AdmissionBlock,
    BaselineRanking, BlockComparison, ContractionCurve, ContractionReport, CurveBin, Grouping, RejectedStats,
};
pub use correlation::{
    pearson, score_correlation, spearman, within_program_rank_corr, ProgramCorrelation, WithinProgramCorrelation,
};
pub use counterfactual::{counterfactual_predict, counterfactual_table};
pub use fixed_effects::{
    fit_two_way_fe, Coefficient, CounterfactualRow, DecompositionResult, FeSpec, FieldResidual, FE_TOLERANCE,
};
