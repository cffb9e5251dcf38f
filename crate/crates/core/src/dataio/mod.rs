//! Response and Q-matrix loading, validation, fold splitting and synthetic data.

mod folds;
mod io;
mod matrix;
mod synth;

use std::path::Path;

use thiserror::Error;

pub use folds::{split_folds, FoldPlan};
pub use io::{
    load_q_matrix, load_response_matrix, long_csv_string, parse_dense_tsv, parse_long_csv, parse_q_csv,
    q_csv_string, write_dense_tsv, write_long_csv, write_q_csv, ResponseFormat,
};
pub(crate) use io::write_file;
pub use matrix::{Cell, QMatrix, ResponseMatrix};
pub use synth::{
    generate_synthetic_dina, generate_synthetic_hodina, generate_synthetic_irt, random_q_matrix, simulate_dina,
    Generator, GroundTruth, Interval,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: score `{value}` is not 0 or 1")]
    NonBinaryScore { line: usize, value: String },
    #[error("line {line}: Q-matrix cell `{value}` is not 0 or 1")]
    NonBinaryCell { line: usize, value: String },
    #[error("{0} has no observed responses")]
    EmptyLearnerOrExercise(String),
    #[error("line {line}: duplicate record for learner {learner}, exercise {exercise}")]
    DuplicateRecord { line: usize, learner: String, exercise: String },
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("exercise {0} requires no knowledge point")]
    AllZeroExerciseRow(String),
    #[error("{observed} observed cells cannot fill {folds} folds")]
    TooFewObservations { observed: usize, folds: usize },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("responses and Q-matrix are misaligned: {0}")]
    Misaligned(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}
