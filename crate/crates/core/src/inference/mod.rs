//! Everything computed from fitted models: predictions and intervals,
//! variable importance, permutation tests, variable selection, partial
//! dependence, and cross-validation.

pub mod cv;
pub mod importance;
pub mod pdp;
pub mod permutation;
pub mod predict;

pub use cv::{
    cv_grid_search, k_fold_cv, rmse_by_num_trees, ConfusionMatrix, CvGrid, CvResult, ErrorStats, GridCell,
    GridSearchResult, TreeCountRmse,
};
pub use importance::{
    importance_report, inclusion_proportions, interaction_counts, split_counts, top_interaction, ImportanceReport,
    ReplicatedSummary,
};
pub use pdp::{partial_dependence, PdpPoint, PdpResult, PDP_LEVELS};
pub use permutation::{
    apply_thresholds, cov_importance_test, in_sample_statistic, permutation_p_value, var_selection, var_selection_cv,
    CovTestResult, CovariateSpec, SelectionMethod, VarSelectionConfig, VarSelectionCvResult, VarSelectionResult,
};
pub use predict::{
    credible_interval, intervals, predict, predict_point, prediction_interval, row_draws, IntervalEstimate,
    IntervalKind, PredictionResult,
};
