use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::NdError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Option<Vec<f64>>,
    #[serde(skip, default = "yes")]
    pub requires_grad: bool,
}

fn yes() -> bool {
    true
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, NdError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(NdError::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values, grad: None, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), values: vec![0.0; n], grad: None, requires_grad: false }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![], values: vec![v], grad: None, requires_grad: false }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn glorot<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let n = shape.iter().product();
        let values = (0..n).map(|_| dist.sample(rng)).collect();
        Self { shape: shape.to_vec(), values, grad: None, requires_grad: true }
    }

    pub fn randn<R: Rng>(shape: &[usize], sd: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, sd).expect("positive sd");
        let n = shape.iter().product();
        let values = (0..n).map(|_| dist.sample(rng)).collect();
        Self { shape: shape.to_vec(), values, grad: None, requires_grad: false }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<(), NdError> {
        if g.len() != self.values.len() {
            return Err(NdError::ShapeMismatch(format!(
                "gradient of length {} for tensor {:?}",
                g.len(),
                self.shape
            )));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    params: BTreeMap<String, Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, slot)) => *slot = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    pub fn to_json(&self) -> String {
        let params = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), Entry { shape: t.shape.clone(), values: t.values.clone() }))
            .collect();
        serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, params }).expect("finite checkpoint")
    }

    /// Parameters come back sorted by name, all marked trainable.
    pub fn from_json(s: &str) -> Result<Self, NdError> {
        let ck: Checkpoint = serde_json::from_str(s).map_err(|e| NdError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(NdError::Checkpoint(format!("unsupported checkpoint version {}", ck.version)));
        }
        let mut store = ParamStore::new();
        for (name, e) in ck.params {
            let t = Tensor::new(e.shape, e.values).map_err(|err| NdError::Checkpoint(format!("{name}: {err}")))?;
            store.insert(name, t.with_grad());
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), NdError> {
        std::fs::write(path, self.to_json()).map_err(|e| NdError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, NdError> {
        let s = std::fs::read_to_string(path).map_err(|e| NdError::Io(path.display().to_string(), e))?;
        Self::from_json(&s)
    }
}
