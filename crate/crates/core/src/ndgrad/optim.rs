use serde::{Deserialize, Serialize};

use super::{NdError, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self { step: 0, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: Vec::new(), v: Vec::new() }
    }
}

/// One bias-corrected Adam update over every trainable tensor in `params`,
/// then clears their gradients.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<(), NdError> {
    if let Some((name, _)) = params.iter().find(|(_, t)| t.requires_grad && t.grad.is_none()) {
        return Err(NdError::MissingGrad(name.to_string()));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(NdError::ShapeMismatch(format!(
            "optimizer tracks {} tensors, store has {}",
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (idx, (_, p)) in params.iter_mut().enumerate() {
        if !p.requires_grad {
            continue;
        }
        let g = p.grad.take().expect("checked above");
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        if m.len() != g.len() {
            return Err(NdError::ShapeMismatch(format!("moment length {} vs parameter {}", m.len(), g.len())));
        }
        for i in 0..g.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            p.values[i] -= state.learning_rate * mh / (vh.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
