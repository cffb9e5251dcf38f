use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiagnosisError, LdmConfig};
use crate::ndgrad::{ParamStore, Tape, Tensor, Var};

/// Layer widths fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub d2: usize,
    pub d3: usize,
    pub d4: usize,
    /// Raw SC row width.
    pub d_s: usize,
    /// Raw EC row width.
    pub d_e: usize,
    pub attn_channels: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub use_deep: bool,
    pub use_attention: bool,
}

impl Layout {
    pub fn from_config(cfg: &LdmConfig, d_s: usize, d_e: usize) -> Self {
        Self {
            d2: cfg.d2,
            d3: cfg.d3,
            d4: cfg.d4,
            d_s,
            d_e,
            attn_channels: cfg.attn_channels,
            conv_channels: cfg.conv_channels,
            conv_kernel: cfg.conv_kernel,
            pool_window: cfg.pool_window,
            use_deep: cfg.use_deep,
            use_attention: cfg.use_attention,
        }
    }

    /// Fused feature width: d4 + d_s + d_e (d4 dropped without the deep path).
    pub fn d5(&self) -> usize {
        let deep = if self.use_deep { self.d4 } else { 0 };
        deep + self.d_s + self.d_e
    }

    fn pooled(&self) -> usize {
        self.d5() / self.pool_window
    }

    fn predictor_channels_in(&self) -> usize {
        if self.use_attention {
            self.attn_channels
        } else {
            1
        }
    }

    fn validate(&self) -> Result<(), DiagnosisError> {
        let counts = [self.d2, self.d3, self.attn_channels, self.conv_channels, self.conv_kernel, self.pool_window];
        if counts.contains(&0) || (self.use_deep && self.d4 == 0) {
            return Err(DiagnosisError::InvalidConfig("layer widths must be positive".into()));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(DiagnosisError::InvalidConfig("conv kernel must be odd to preserve length".into()));
        }
        if self.pooled() == 0 {
            return Err(DiagnosisError::InvalidConfig(format!(
                "fused width {} is smaller than the pool window {}",
                self.d5(),
                self.pool_window
            )));
        }
        Ok(())
    }
}

/// One minibatch of gathered inputs, row-major.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub n: usize,
    pub hs: Vec<f64>,
    pub he: Vec<f64>,
    pub sc: Vec<f64>,
    pub ec: Vec<f64>,
}

/// Parameter handles recorded on a tape.
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Var {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| *v).expect("parameter bound")
    }

    pub fn replace(&mut self, name: &str, v: Var) {
        if let Some(slot) = self.vars.iter_mut().find(|(n, _)| n == name) {
            slot.1 = v;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

pub struct Forward {
    pub p: Var,
    /// Attention matrix `[B, d5, d5]`, rows summing to 1.
    pub attention: Option<Var>,
}

/// Response network, self-attention and convolutional predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layout: Layout,
    pub params: ParamStore,
}

impl Network {
    pub fn init(layout: Layout, seed: u64) -> Result<Self, DiagnosisError> {
        layout.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let l = &layout;
        if l.use_deep {
            let fan_in = l.d2 + l.d3;
            params.insert("lrr.w", Tensor::glorot(&[l.d4, fan_in], fan_in, l.d4, &mut rng));
            params.insert("lrr.b", Tensor::zeros(&[l.d4]).with_grad());
        }
        if l.use_attention {
            for name in ["q", "k", "v"] {
                params.insert(
                    format!("attn.{name}.w"),
                    Tensor::glorot(&[l.attn_channels, 1, 1], 1, l.attn_channels, &mut rng),
                );
                params.insert(format!("attn.{name}.b"), Tensor::zeros(&[l.attn_channels]).with_grad());
            }
        }
        let cin = l.predictor_channels_in();
        params.insert(
            "pred.conv.w",
            Tensor::glorot(&[l.conv_channels, cin, l.conv_kernel], cin * l.conv_kernel, l.conv_channels, &mut rng),
        );
        params.insert("pred.conv.b", Tensor::zeros(&[l.conv_channels]).with_grad());
        let flat = l.conv_channels * l.pooled();
        params.insert("pred.dense.w", Tensor::glorot(&[1, flat], flat, 1, &mut rng));
        params.insert("pred.dense.b", Tensor::zeros(&[1]).with_grad());
        Ok(Self { layout, params })
    }

    /// Wraps loaded parameters, checking every expected tensor is present
    /// with the right shape.
    pub fn from_params(layout: Layout, params: ParamStore) -> Result<Self, DiagnosisError> {
        let reference = Network::init(layout.clone(), 0)?;
        for (name, t) in reference.params.iter() {
            match params.get(name) {
                Some(p) if p.shape == t.shape => {}
                Some(p) => {
                    return Err(DiagnosisError::ShapeMismatch(format!(
                        "{name}: checkpoint {:?} vs layout {:?}",
                        p.shape, t.shape
                    )))
                }
                None => return Err(DiagnosisError::ShapeMismatch(format!("checkpoint lacks {name}"))),
            }
        }
        Ok(Self { layout, params })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.params.iter().map(|(n, t)| (n.to_string(), tape.leaf(t))).collect() }
    }

    /// Records the full pipeline for a batch. Dropout is active only when
    /// `training`.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &Batch,
        training: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Forward, DiagnosisError> {
        let l = &self.layout;
        let n = batch.n;
        let sc = tape.constant(vec![n, l.d_s], batch.sc.clone())?;
        let ec = tape.constant(vec![n, l.d_e], batch.ec.clone())?;
        let f = if l.use_deep {
            let hs = tape.constant(vec![n, l.d2], batch.hs.clone())?;
            let he = tape.constant(vec![n, l.d3], batch.he.clone())?;
            let fd = self.record_lrr(tape, bound, hs, he, training, dropout, rng)?;
            tape.concat(&[fd, sc, ec])?
        } else {
            tape.concat(&[sc, ec])?
        };
        let f = tape.reshape(f, &[n, 1, l.d5()])?;
        let (seq, attention) = if l.use_attention {
            let (fa, a) = self.record_attention(tape, bound, f)?;
            (fa, Some(a))
        } else {
            (f, None)
        };
        let p = self.record_predictor(tape, bound, seq, training, dropout, rng)?;
        Ok(Forward { p, attention })
    }

    #[allow(clippy::too_many_arguments)]
    fn record_lrr<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        hs: Var,
        he: Var,
        training: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Var, DiagnosisError> {
        let x = tape.concat(&[hs, he])?;
        let z = tape.dense(x, bound.get("lrr.w"), bound.get("lrr.b"))?;
        let fd = tape.tanh(z);
        Ok(tape.dropout(fd, dropout, training, rng)?)
    }

    /// `f` is `[B, 1, d5]`; returns the attended sequence `[B, c, d5]` and the
    /// attention matrix `[B, d5, d5]`.
    fn record_attention(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<(Var, Var), DiagnosisError> {
        let q = tape.conv1d(f, bound.get("attn.q.w"), bound.get("attn.q.b"), 1)?;
        let k = tape.conv1d(f, bound.get("attn.k.w"), bound.get("attn.k.b"), 1)?;
        let v = tape.conv1d(f, bound.get("attn.v.w"), bound.get("attn.v.b"), 1)?;
        let qt = tape.transpose_last2(q)?;
        let scores = tape.bmm(qt, k)?;
        let a = tape.softmax(scores)?;
        let at = tape.transpose_last2(a)?;
        let fa = tape.bmm(v, at)?;
        Ok((fa, a))
    }

    fn record_predictor<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        seq: Var,
        training: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Var, DiagnosisError> {
        let n = tape.shape(seq)[0];
        let c = tape.conv1d(seq, bound.get("pred.conv.w"), bound.get("pred.conv.b"), 1)?;
        let c = tape.relu(c);
        let pooled = tape.maxpool1d(c, self.layout.pool_window)?;
        let width = tape.value(pooled).len() / n;
        let flat = tape.reshape(pooled, &[n, width])?;
        let flat = tape.dropout(flat, dropout, training, rng)?;
        let z = tape.dense(flat, bound.get("pred.dense.w"), bound.get("pred.dense.b"))?;
        let z = tape.reshape(z, &[n])?;
        Ok(tape.sigmoid(z))
    }

    /// Deep feature `tanh(W3 [h_s; h_e] + b3)` in inference mode.
    pub fn lrr_forward(&self, hs: &[f64], he: &[f64]) -> Result<Vec<f64>, DiagnosisError> {
        let l = &self.layout;
        if !l.use_deep {
            return Err(DiagnosisError::InvalidConfig("network has no deep path".into()));
        }
        if hs.len() != l.d2 || he.len() != l.d3 {
            return Err(DiagnosisError::ShapeMismatch(format!(
                "latents of length {}/{}, expected {}/{}",
                hs.len(),
                he.len(),
                l.d2,
                l.d3
            )));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let hs = tape.constant(vec![1, l.d2], hs.to_vec())?;
        let he = tape.constant(vec![1, l.d3], he.to_vec())?;
        let fd = self.record_lrr(&mut tape, &bound, hs, he, false, 0.0, &mut NoRng)?;
        Ok(tape.value(fd).to_vec())
    }

    /// Concatenation `[f_d; SC row; EC row]`.
    pub fn fuse(&self, fd: &[f64], sc: &[f64], ec: &[f64]) -> Result<Vec<f64>, DiagnosisError> {
        let l = &self.layout;
        let deep = if l.use_deep { l.d4 } else { 0 };
        if fd.len() != deep || sc.len() != l.d_s || ec.len() != l.d_e {
            return Err(DiagnosisError::ShapeMismatch(format!(
                "fuse got {}/{}/{}, expected {deep}/{}/{}",
                fd.len(),
                sc.len(),
                ec.len(),
                l.d_s,
                l.d_e
            )));
        }
        Ok([fd, sc, ec].concat())
    }

    /// Attended sequence (`c × d5`, channel-major) and the `d5 × d5`
    /// attention matrix for one fused vector.
    pub fn attention_forward(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>), DiagnosisError> {
        let d5 = self.layout.d5();
        if !self.layout.use_attention {
            return Err(DiagnosisError::InvalidConfig("network has no attention block".into()));
        }
        if f.len() != d5 {
            return Err(DiagnosisError::ShapeMismatch(format!("fused vector of length {}, expected {d5}", f.len())));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let fv = tape.constant(vec![1, 1, d5], f.to_vec())?;
        let (fa, a) = self.record_attention(&mut tape, &bound, fv)?;
        Ok((tape.value(fa).to_vec(), tape.value(a).to_vec()))
    }

    /// Probability from an attended sequence laid out as `channels × d5`.
    pub fn predict_forward(&self, seq: &[f64]) -> Result<f64, DiagnosisError> {
        let d5 = self.layout.d5();
        let ch = self.layout.predictor_channels_in();
        if seq.len() != ch * d5 {
            return Err(DiagnosisError::ShapeMismatch(format!(
                "sequence of length {}, expected {ch}x{d5}",
                seq.len()
            )));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let s = tape.constant(vec![1, ch, d5], seq.to_vec())?;
        let p = self.record_predictor(&mut tape, &bound, s, false, 0.0, &mut NoRng)?;
        Ok(tape.value(p)[0])
    }

    /// Probabilities and position-averaged attention weights for a batch in
    /// inference mode.
    pub fn infer(&self, batch: &Batch) -> Result<(Vec<f64>, Vec<Vec<f64>>), DiagnosisError> {
        if batch.n == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, batch, false, 0.0, &mut NoRng)?;
        let p = tape.value(out.p).to_vec();
        let weights = match out.attention {
            Some(a) => average_rows(tape.value(a), batch.n, self.layout.d5()),
            None => vec![Vec::new(); batch.n],
        };
        Ok((p, weights))
    }
}

/// Mean over query positions of each `d5 × d5` attention matrix.
fn average_rows(a: &[f64], n: usize, d5: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|b| {
            let m = &a[b * d5 * d5..(b + 1) * d5 * d5];
            let mut w = vec![0.0; d5];
            for row in m.chunks(d5) {
                w.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
            }
            w.iter_mut().for_each(|v| *v /= d5 as f64);
            w
        })
        .collect()
}

/// Inference never draws; dropout short-circuits before touching the rng.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference path drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference path drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference path drew a random number")
    }
}
