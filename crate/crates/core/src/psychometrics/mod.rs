//! Cognitive parameter estimation for the IRT, DINA, MIRT and Ho-DINA
//! channels, and assembly of the EC/SC parameter sets.

mod ascent;
pub mod dina;
pub mod hodina;
pub mod irt;
pub mod mirt;
pub mod quadrature;
mod response;
mod sets;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dataio::{DataError, QMatrix, ResponseMatrix};

pub use dina::{class_profile, fit_dina_em, DinaFit};
pub(crate) use dina::class_eta;
pub use hodina::{fit_hodina_mcmc, HoDinaFit, McmcConfig};
pub use irt::{fit_irt_em, initial_irt_items, IrtFit};
pub use mirt::{fit_mirt_em, MirtFit};
pub(crate) use response::{dina_ideal_eta, mirt_response_unchecked};
pub use response::{
    dina_ideal_response, dina_response, hodina_attr_prob, irt_response, logistic, mirt_response, IrtItem, MirtItem,
    DEFAULT_D,
};
pub use sets::{build_parameter_sets, ChannelOutputs, CognitiveParameterSets, Column, ColumnKind, ParamTable, Variant};

#[derive(Debug, Error)]
pub enum PsychError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("MIRT dimension {0} outside [1, 4]")]
    DimensionTooLarge(usize),
    #[error("{0} knowledge points exceed the enumerable limit of 20")]
    TooManyKnowledgePoints(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("MCMC chain diverged: {block} acceptance {rate:.4} over the window ending at sweep {sweep}")]
    ChainDiverged { block: String, rate: f64, sweep: usize },
    #[error("channel `{0}` has not been fitted")]
    MissingChannel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once |Δ log-likelihood| falls below this.
    pub tolerance: f64,
    pub d: f64,
    /// Projected-gradient steps per item per M-step.
    pub inner_steps: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: 1e-4, d: DEFAULT_D, inner_steps: 25, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsychConfig {
    pub em: EmConfig,
    pub mcmc: McmcConfig,
    pub mirt_dims: usize,
    pub include_irt_guess: bool,
}

impl Default for PsychConfig {
    fn default() -> Self {
        Self { em: EmConfig::default(), mcmc: McmcConfig::default(), mirt_dims: 3, include_irt_guess: false }
    }
}

impl PsychConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.em.seed = seed;
        self.mcmc.seed = seed;
        self
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fits every channel the variant needs on the same data.
pub fn fit_channels(
    variant: Variant,
    r: &ResponseMatrix,
    q: &QMatrix,
    config: &PsychConfig,
) -> Result<ChannelOutputs, PsychError> {
    let mut out = ChannelOutputs { irt: Some(fit_irt_em(r, &config.em)?), ..Default::default() };
    match variant {
        Variant::LdmId => {
            out.dina = Some(fit_dina_em(r, q, &config.em)?);
        }
        Variant::LdmHmi => {
            out.mirt = Some(fit_mirt_em(r, config.mirt_dims, &config.em)?);
            out.hodina = Some(fit_hodina_mcmc(r, q, &config.mcmc)?);
        }
    }
    Ok(out)
}

/// Flat JSON export: arrays keyed `irt.difficulty`, `dina.slip`, ..., a
/// `meta` block, and the assembled `sets`.
pub fn export_json(channels: &ChannelOutputs, sets: &CognitiveParameterSets, seed: u64) -> Value {
    let mut obj = Map::new();
    let mut iterations = Map::new();
    let mut final_ll = Map::new();
    if let Some(f) = &channels.irt {
        obj.insert("irt.difficulty".into(), json!(f.items.iter().map(|i| i.difficulty).collect::<Vec<_>>()));
        obj.insert("irt.discrimination".into(), json!(f.items.iter().map(|i| i.discrimination).collect::<Vec<_>>()));
        obj.insert("irt.guess".into(), json!(f.items.iter().map(|i| i.guess).collect::<Vec<_>>()));
        obj.insert("irt.theta".into(), json!(f.theta));
        iterations.insert("irt".into(), json!(f.iterations));
        final_ll.insert("irt".into(), json!(f.final_log_likelihood()));
    }
    if let Some(f) = &channels.dina {
        obj.insert("dina.slip".into(), json!(f.slip));
        obj.insert("dina.guess".into(), json!(f.guess));
        obj.insert("dina.alpha".into(), json!(f.alpha));
        obj.insert("dina.class_prior".into(), json!(f.class_prior));
        iterations.insert("dina".into(), json!(f.iterations));
        final_ll.insert("dina".into(), json!(f.log_likelihood.last()));
    }
    if let Some(f) = &channels.mirt {
        obj.insert("mirt.disc".into(), json!(f.items.iter().map(|i| &i.disc).collect::<Vec<_>>()));
        obj.insert("mirt.difficulty".into(), json!(f.items.iter().map(|i| i.difficulty).collect::<Vec<_>>()));
        obj.insert("mirt.guess".into(), json!(f.items.iter().map(|i| i.guess).collect::<Vec<_>>()));
        obj.insert("mirt.ability".into(), json!(f.ability));
        iterations.insert("mirt".into(), json!(f.iterations));
        final_ll.insert("mirt".into(), json!(f.final_log_likelihood()));
    }
    if let Some(f) = &channels.hodina {
        obj.insert("hodina.theta".into(), json!(f.theta));
        obj.insert("hodina.alpha".into(), json!(f.alpha));
        obj.insert("hodina.slip".into(), json!(f.slip));
        obj.insert("hodina.guess".into(), json!(f.guess));
        obj.insert("hodina.lambda0".into(), json!(f.lambda0));
        obj.insert("hodina.lambda1".into(), json!(f.lambda1));
        obj.insert("hodina.acceptance".into(), json!(f.acceptance));
        iterations.insert("hodina".into(), json!(f.sweeps));
    }
    obj.insert(
        "meta".into(),
        json!({
            "variant": sets.variant,
            "seed": seed,
            "iterations": iterations,
            "final_log_likelihood": final_ll,
            "provenance": sets.provenance,
        }),
    );
    obj.insert("sets".into(), serde_json::to_value(sets).expect("sets serialize"));
    Value::Object(obj)
}
