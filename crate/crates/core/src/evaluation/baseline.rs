use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataio::{Cell, QMatrix};
use crate::psychometrics::{class_eta, ChannelOutputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Irt,
    Dina,
    Mirt,
    HoDina,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Irt, Channel::Dina, Channel::Mirt, Channel::HoDina];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Irt => "irt",
            Channel::Dina => "dina",
            Channel::Mirt => "mirt",
            Channel::HoDina => "hodina",
        }
    }

    pub fn is_fitted(&self, channels: &ChannelOutputs) -> bool {
        match self {
            Channel::Irt => channels.irt.is_some(),
            Channel::Dina => channels.dina.is_some(),
            Channel::Mirt => channels.mirt.is_some(),
            Channel::HoDina => channels.hodina.is_some(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DinaScoring {
    /// Posterior-weighted mixture over latent classes.
    #[default]
    Mixture,
    /// DINA law at the MAP mastery vector.
    Map,
}

/// Scores each cell with the channel's own response function at its point
/// estimates (DINA and Ho-DINA mix over their posteriors).
pub fn baseline_predict(
    channel: Channel,
    channels: &ChannelOutputs,
    q: &QMatrix,
    cells: &[Cell],
    dina_scoring: DinaScoring,
) -> Result<Vec<f64>, EvalError> {
    let missing = || EvalError::MissingChannel(channel.as_str().to_string());
    Ok(match channel {
        Channel::Irt => {
            let f = channels.irt.as_ref().ok_or_else(missing)?;
            cells.iter().map(|c| f.predict(c.learner, c.exercise)).collect()
        }
        Channel::Dina => {
            let f = channels.dina.as_ref().ok_or_else(missing)?;
            match dina_scoring {
                DinaScoring::Mixture => {
                    let eta = class_eta(q);
                    cells.iter().map(|c| f.predict_mixture(c.learner, c.exercise, &eta)).collect()
                }
                DinaScoring::Map => cells.iter().map(|c| f.predict_map(c.learner, c.exercise, q)).collect(),
            }
        }
        Channel::Mirt => {
            let f = channels.mirt.as_ref().ok_or_else(missing)?;
            cells.iter().map(|c| f.predict(c.learner, c.exercise)).collect()
        }
        Channel::HoDina => {
            let f = channels.hodina.as_ref().ok_or_else(missing)?;
            cells.iter().map(|c| f.predict(c.learner, c.exercise)).collect()
        }
    })
}
