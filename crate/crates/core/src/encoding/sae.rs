use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EncodingError;
use crate::ndgrad::{adam_step, AdamState, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Widths of extra encoder layers before the latent layer; empty means a
    /// single encoder/decoder pair.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for SaeConfig {
    fn default() -> Self {
        Self { epochs: 100, learning_rate: 0.001, batch_size: 64, hidden: Vec::new(), seed: 0 }
    }
}

/// Tanh autoencoder. Encoder layers are `enc.<i>.w/b`, decoder layers
/// `dec.<i>.w/b`, mirrored.
#[derive(Clone, Debug, PartialEq)]
pub struct SaeModel {
    pub params: ParamStore,
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Mean reconstruction MSE per epoch.
    pub loss_history: Vec<f64>,
}

impl SaeModel {
    pub fn init(input_dim: usize, latent_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(latent_dim);
        let mut params = ParamStore::new();
        let depth = dims.len() - 1;
        for i in 0..depth {
            let (a, b) = (dims[i], dims[i + 1]);
            params.insert(format!("enc.{i}.w"), Tensor::glorot(&[b, a], a, b, &mut rng));
            params.insert(format!("enc.{i}.b"), Tensor::zeros(&[b]).with_grad());
        }
        for i in 0..depth {
            let (a, b) = (dims[depth - i], dims[depth - i - 1]);
            params.insert(format!("dec.{i}.w"), Tensor::glorot(&[b, a], a, b, &mut rng));
            params.insert(format!("dec.{i}.b"), Tensor::zeros(&[b]).with_grad());
        }
        Self { params, input_dim, latent_dim, loss_history: Vec::new() }
    }

    pub fn from_params(params: ParamStore) -> Result<Self, EncodingError> {
        let first = params.get("enc.0.w").ok_or_else(|| EncodingError::Parse("missing enc.0.w".into()))?;
        let input_dim = first.shape[1];
        let depth = params.names().filter(|n| n.starts_with("enc.") && n.ends_with(".w")).count();
        let last = params
            .get(&format!("enc.{}.w", depth - 1))
            .ok_or_else(|| EncodingError::Parse("encoder layers are not contiguous".into()))?;
        let latent_dim = last.shape[0];
        Ok(Self { params, input_dim, latent_dim, loss_history: Vec::new() })
    }

    fn depth(&self) -> usize {
        self.params.names().filter(|n| n.starts_with("enc.") && n.ends_with(".w")).count()
    }

    fn record_encoder(&self, tape: &mut Tape, x: Var, vars: &mut Vec<(String, Var)>) -> Result<Var, EncodingError> {
        let mut h = x;
        for i in 0..self.depth() {
            let w = self.bind(tape, &format!("enc.{i}.w"), vars);
            let b = self.bind(tape, &format!("enc.{i}.b"), vars);
            let z = tape.dense(h, w, b)?;
            h = tape.tanh(z);
        }
        Ok(h)
    }

    fn record_decoder(&self, tape: &mut Tape, h: Var, vars: &mut Vec<(String, Var)>) -> Result<Var, EncodingError> {
        let mut y = h;
        for i in 0..self.depth() {
            let w = self.bind(tape, &format!("dec.{i}.w"), vars);
            let b = self.bind(tape, &format!("dec.{i}.b"), vars);
            let z = tape.dense(y, w, b)?;
            y = tape.tanh(z);
        }
        Ok(y)
    }

    fn bind(&self, tape: &mut Tape, name: &str, vars: &mut Vec<(String, Var)>) -> Var {
        let v = tape.leaf(self.params.get(name).expect("layer exists"));
        vars.push((name.to_string(), v));
        v
    }

    fn check_rows(&self, rows: &[Vec<f64>]) -> Result<(), EncodingError> {
        match rows.iter().find(|r| r.len() != self.input_dim) {
            Some(r) => Err(EncodingError::ArityMismatch { expected: self.input_dim, got: r.len() }),
            None => Ok(()),
        }
    }

    /// Latent representation `tanh(W1 x + b1)` (through every encoder layer).
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, EncodingError> {
        Ok(self.encode_batch(std::slice::from_ref(&x.to_vec()))?.remove(0))
    }

    pub fn encode_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EncodingError> {
        self.check_rows(rows)?;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let x = tape.constant(vec![rows.len(), self.input_dim], rows.concat())?;
        let h = self.record_encoder(&mut tape, x, &mut Vec::new())?;
        Ok(tape.value(h).chunks(self.latent_dim).map(<[f64]>::to_vec).collect())
    }

    pub fn reconstruct_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EncodingError> {
        self.check_rows(rows)?;
        let mut tape = Tape::new();
        let x = tape.constant(vec![rows.len(), self.input_dim], rows.concat())?;
        let h = self.record_encoder(&mut tape, x, &mut Vec::new())?;
        let y = self.record_decoder(&mut tape, h, &mut Vec::new())?;
        Ok(tape.value(y).chunks(self.input_dim).map(<[f64]>::to_vec).collect())
    }

    /// Mean squared reconstruction error over all entries.
    pub fn reconstruction_mse(&self, rows: &[Vec<f64>]) -> Result<f64, EncodingError> {
        let rec = self.reconstruct_batch(rows)?;
        let total: f64 =
            rows.iter().zip(&rec).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2))).sum();
        Ok(total / (rows.len() * self.input_dim) as f64)
    }
}

/// MSE of predicting every entry by its column mean.
pub fn column_mean_mse(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let width = rows.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        total += rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>();
    }
    total / (n * width as f64)
}

/// Fits the autoencoder to reconstruct `vectors` with Adam on mean squared
/// error, shuffling minibatches with the configured seed.
pub fn train_sae(vectors: &[Vec<f64>], latent_dim: usize, config: &SaeConfig) -> Result<SaeModel, EncodingError> {
    let width = vectors.first().map(Vec::len).ok_or(EncodingError::EmptyInput)?;
    if width == 0 || latent_dim == 0 || config.batch_size == 0 {
        return Err(EncodingError::EmptyInput);
    }
    let mut model = SaeModel::init(width, latent_dim, &config.hidden, config.seed);
    model.check_rows(vectors)?;
    let mut adam = AdamState::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5ae);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let flat: Vec<f64> = batch.iter().flat_map(|&i| vectors[i].iter().copied()).collect();
            let mut tape = Tape::new();
            let x = tape.constant(vec![batch.len(), width], flat.clone())?;
            let mut vars = Vec::new();
            let h = model.record_encoder(&mut tape, x, &mut vars)?;
            let y = model.record_decoder(&mut tape, h, &mut vars)?;
            let loss = tape.mse_loss(y, &flat)?;
            epoch_loss += tape.value(loss)[0] * batch.len() as f64;
            tape.backward(loss)?;
            for (name, v) in &vars {
                tape.accumulate_into(*v, model.params.get_mut(name).expect("bound"))?;
            }
            adam_step(&mut model.params, &mut adam)?;
        }
        model.loss_history.push(epoch_loss / vectors.len() as f64);
    }
    Ok(model)
}
