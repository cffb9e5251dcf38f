//! Interpretability exports: parameter reports, latent correlations and
//! attention weights, as plain data files.

mod correlation;
mod reports;

use thiserror::Error;

pub use correlation::{latent_correlation, model_latent_correlation, CorrelationMatrix};
pub use reports::{
    export_attention_weights, export_exercise_report, export_learner_report, AttentionExport, ExerciseReport,
    ExerciseReports, LearnerReport, LearnerReports, NamedValue,
};

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("unknown exercise `{0}`")]
    UnknownExercise(String),
    #[error("correlation needs at least 3 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("batch lengths differ: {0} learner rows vs {1} exercise rows")]
    LengthMismatch(usize, usize),
    #[error("ragged latent batch: row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("model has no latent features (trained shallow-only)")]
    NoLatents,
    #[error("cannot parse report: {0}")]
    Parse(String),
    #[error(transparent)]
    Diagnosis(#[from] crate::diagnosis::DiagnosisError),
}
