//! Metrics, psychometric baselines and the cross-validation harness.

mod baseline;
mod cv;
mod metrics;

use thiserror::Error;

pub use baseline::{baseline_predict, Channel, DinaScoring};
pub use cv::{
    cross_validate, evaluate_fold, validation_split, Arm, CvConfig, CvError, CvReport, FoldTag, MetricReport,
    ORACLE_MODEL,
};
pub use metrics::{auc, rmse};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("AUC needs both classes among the labels")]
    SingleClassLabels,
    #[error("no cells to score")]
    EmptyInput,
    #[error("channel `{0}` has not been fitted")]
    MissingChannel(String),
}
