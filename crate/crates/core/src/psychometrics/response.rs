//! Item response laws of the four channel models.

use serde::{Deserialize, Serialize};

use super::PsychError;

/// Logistic scale constant making the logistic curve track the normal ogive.
pub const DEFAULT_D: f64 = 1.702;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrtItem {
    pub difficulty: f64,
    pub discrimination: f64,
    pub guess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirtItem {
    pub disc: Vec<f64>,
    /// Additive intercept `d` of the compensatory logit `a·α + d`.
    pub difficulty: f64,
    pub guess: f64,
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Three-parameter logistic: `c + (1 - c) / (1 + exp(-D a (θ - b)))`.
#[inline]
pub fn irt_response(theta: f64, item: &IrtItem, d: f64) -> f64 {
    item.guess + (1.0 - item.guess) * logistic(d * item.discrimination * (theta - item.difficulty))
}

/// Conjunctive ideal response η: 1 iff every required skill is mastered.
pub fn dina_ideal_response(alpha: &[u8], q_row: &[u8]) -> Result<u8, PsychError> {
    if alpha.len() != q_row.len() {
        return Err(PsychError::LengthMismatch { expected: q_row.len(), got: alpha.len() });
    }
    Ok(dina_ideal_eta(alpha, q_row))
}

#[inline]
pub(crate) fn dina_ideal_eta(alpha: &[u8], q_row: &[u8]) -> u8 {
    debug_assert_eq!(alpha.len(), q_row.len());
    u8::from(alpha.iter().zip(q_row).all(|(&a, &q)| a >= q))
}

/// `guess^(1-η) · (1-slip)^η`.
#[inline]
pub fn dina_response(eta: u8, slip: f64, guess: f64) -> f64 {
    if eta == 1 {
        1.0 - slip
    } else {
        guess
    }
}

/// Compensatory multidimensional 3PL: `c + (1-c) / (1 + exp(-D (a·α + d)))`.
pub fn mirt_response(ability: &[f64], item: &MirtItem, d: f64) -> Result<f64, PsychError> {
    if ability.len() != item.disc.len() {
        return Err(PsychError::DimensionMismatch { expected: item.disc.len(), got: ability.len() });
    }
    Ok(mirt_response_unchecked(ability, item, d))
}

#[inline]
pub(crate) fn mirt_response_unchecked(ability: &[f64], item: &MirtItem, d: f64) -> f64 {
    let z: f64 = item.disc.iter().zip(ability).map(|(a, x)| a * x).sum::<f64>() + item.difficulty;
    item.guess + (1.0 - item.guess) * logistic(d * z)
}

/// Probability of mastering a skill given higher-order ability: σ(λ0 + λ1 θ).
#[inline]
pub fn hodina_attr_prob(theta: f64, lambda0: f64, lambda1: f64) -> f64 {
    logistic(lambda0 + lambda1 * theta)
}
