//! Metrics, reference baselines, vote aggregation, permutation importance
//! and report export.

mod ablation;
mod baselines;
mod export;
mod importance;
pub mod metrics;
mod vote;

pub use ablation::{ablate_images, AblationConfig, AblationRow};
pub use baselines::{neighbor_baseline, random_baseline, target_value, NEIGHBOR_K};
pub use export::{export_predictions_geojson, export_tree_dot, outcome, Confusion, EvalReport, PredictionRow};
pub use importance::{
    permutation_importance, permutation_importance_with, task_metric, FeatureImportance, ImportanceRanking,
};
pub use metrics::{accuracy, pearson_r2, R2};
pub use vote::vote_aggregate;
