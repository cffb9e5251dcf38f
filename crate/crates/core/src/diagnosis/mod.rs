//! Fusion and prediction: learner-resource response network over frozen
//! autoencoder latents, deep/shallow fusion with raw parameter rows,
//! per-position self-attention and a convolutional predictor trained on BCE.

mod bundle;
mod model;
mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DataError;
use crate::encoding::{EncodingError, SaeConfig, EXERCISE_LATENT, LEARNER_LATENT};
use crate::ndgrad::NdError;
use crate::psychometrics::{PsychError, Variant};

pub use bundle::{load_bundle, save_bundle, BUNDLE_FILES};
pub use model::{
    prepare_features, train_ldm, write_predictions_csv, LdmModel, PredictionRecord, PreparedFeatures, SaePair,
    TrainingHistory,
};
pub use network::{Batch, Bound, Forward, Layout, Network};

#[derive(Debug, Error)]
pub enum DiagnosisError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training cells")]
    EmptyTrainingSet,
    #[error("no validation cells")]
    NoValidationCells,
    #[error("unknown learner `{0}`")]
    UnknownLearner(String),
    #[error("unknown exercise `{0}`")]
    UnknownExercise(String),
    #[error("provenance check failed: {0} was not built from the training cells")]
    Leakage(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(String, String),
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Psych(#[from] PsychError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdmConfig {
    pub variant: Variant,
    /// Learner latent width.
    pub d2: usize,
    /// Exercise latent width.
    pub d3: usize,
    /// Response-network output width.
    pub d4: usize,
    /// Query/key/value channels.
    pub attn_channels: usize,
    /// Output channels of the predictor convolution.
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub bins: usize,
    pub sae: SaeConfig,
    /// Include the response-network features in the fused vector.
    pub use_deep: bool,
    pub use_attention: bool,
    pub seed: u64,
}

impl Default for LdmConfig {
    fn default() -> Self {
        Self {
            variant: Variant::LdmId,
            d2: LEARNER_LATENT,
            d3: EXERCISE_LATENT,
            d4: 64,
            attn_channels: 16,
            conv_channels: 8,
            conv_kernel: 3,
            pool_window: 2,
            dropout: 0.2,
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            bins: 10,
            sae: SaeConfig::default(),
            use_deep: true,
            use_attention: true,
            seed: 0,
        }
    }
}

impl LdmConfig {
    pub fn validate(&self) -> Result<(), DiagnosisError> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DiagnosisError::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.batch_size == 0 || self.patience == 0 || self.bins < 2 {
            return Err(DiagnosisError::InvalidConfig("batch size, patience and bins must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DiagnosisError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}
