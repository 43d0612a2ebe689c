//! Simulation designs, error metrics, cross-validation and the replication runner.

mod crossval;
mod experiment;
mod generate;
mod metrics;

pub use crossval::{kfold_rmsep, kfold_rmsep_with_folds, make_folds, CrossValidation};
pub use experiment::{
    aggregate, run_experiment, run_replicate, CellSummary, ExperimentResult, ExperimentSpec, ReplicateMetrics,
    ReplicateOutcome, ScenarioSpec, MAX_FAILURE_RATE,
};
pub use generate::{draw_label, generate_collinear_design, generate_design, generate_mixture_responses};
pub use metrics::{
    align_components, predict, predict_with, quantile, sse_metrics, MetricsSummary, PredictRule, SseMetrics, Summary,
};
