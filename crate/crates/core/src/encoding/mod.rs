//! One-hot discretization of parameter rows and the tanh autoencoders that
//! turn them into learner/exercise latents.

mod plan;
mod sae;

use thiserror::Error;

use crate::ndgrad::NdError;

pub use plan::{
    build_encoding_plan, build_table_plan, encode_table, one_hot_encode, BinaryTag, ColumnEncoding, ColumnPlan,
    EncodingPlan, TablePlan,
};
pub use sae::{column_mean_mse, train_sae, SaeConfig, SaeModel};

/// Default latent widths for the learner and exercise autoencoders.
pub const LEARNER_LATENT: usize = 128;
pub const EXERCISE_LATENT: usize = 64;

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("row has {got} values, expected {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("no input rows")]
    EmptyInput,
    #[error("need at least 2 bins per continuous column, got {0}")]
    InvalidBins(usize),
    #[error("row index {0} out of range")]
    UnknownRow(usize),
    #[error("cannot parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Nd(#[from] NdError),
}
