//! Compensatory multidimensional 3PL by EM over a Gauss–Hermite product grid.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ascent::projected_ascent;
use super::quadrature::product_grid;
use super::{log_sum_exp, logistic, mirt_response_unchecked, EmConfig, MirtItem, PsychError};
use crate::dataio::ResponseMatrix;

pub const MAX_MIRT_DIMS: usize = 4;

const DISC_BOUNDS: (f64, f64) = (0.0, 4.0);
const INTERCEPT_BOUNDS: (f64, f64) = (-10.0, 10.0);
const GUESS_BOUNDS: (f64, f64) = (0.0, 0.5);
const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirtFit {
    pub dims: usize,
    pub items: Vec<MirtItem>,
    /// EAP ability vector per learner.
    pub ability: Vec<Vec<f64>>,
    pub d: f64,
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub degenerate: Vec<usize>,
    pub data_digest: String,
}

impl MirtFit {
    pub fn predict(&self, learner: usize, exercise: usize) -> f64 {
        mirt_response_unchecked(&self.ability[learner], &self.items[exercise], self.d)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().unwrap_or(&f64::NAN)
    }
}

pub fn fit_mirt_em(r: &ResponseMatrix, dims: usize, config: &EmConfig) -> Result<MirtFit, PsychError> {
    if dims == 0 || dims > MAX_MIRT_DIMS {
        return Err(PsychError::DimensionTooLarge(dims));
    }
    let m = r.n_exercises();
    let data = r.by_learner();
    let mut right = vec![0usize; m];
    let mut seen = vec![0usize; m];
    for obs in &data {
        for &(j, y) in obs {
            seen[j] += 1;
            right[j] += y as usize;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items: Vec<MirtItem> = (0..m)
        .map(|j| {
            let p = if seen[j] > 0 { right[j] as f64 / seen[j] as f64 } else { 0.5 };
            let p = p.clamp(0.02, 0.98);
            MirtItem {
                // asymmetric start breaks the exchangeability of the dimensions
                disc: (0..dims).map(|_| rng.random_range(0.4..1.2)).collect(),
                difficulty: ((p / (1.0 - p)).ln() * 0.8).clamp(INTERCEPT_BOUNDS.0, INTERCEPT_BOUNDS.1),
                guess: 0.05,
            }
        })
        .collect();

    let mut degenerate = Vec::new();
    for j in 0..m {
        if seen[j] > 0 && (right[j] == 0 || right[j] == seen[j]) {
            let all_right = right[j] == seen[j];
            items[j] = MirtItem {
                disc: vec![0.0; dims],
                difficulty: if all_right { INTERCEPT_BOUNDS.1 } else { INTERCEPT_BOUNDS.0 },
                guess: GUESS_BOUNDS.0,
            };
            warn!("MIRT: item {} has identical responses; clamped to boundary", r.exercise_ids()[j]);
            degenerate.push(j);
        }
    }

    let (nodes, weights) = product_grid(dims);
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut steps = vec![1.0 / r.n_learners().max(1) as f64; m];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        let e = e_step(&data, &items, &nodes, &log_w, dims, config.d);
        let converged = trace.last().is_some_and(|prev: &f64| (e.log_likelihood - prev).abs() < config.tolerance);
        trace.push(e.log_likelihood);
        if converged {
            break;
        }
        iterations += 1;
        for j in 0..m {
            if degenerate.contains(&j) || seen[j] == 0 {
                continue;
            }
            m_step_item(&mut items[j], &e.expected_n[j], &e.expected_r[j], &nodes, dims, config, &mut steps[j]);
        }
    }

    let e = e_step(&data, &items, &nodes, &log_w, dims, config.d);
    if trace.last() != Some(&e.log_likelihood) {
        trace.push(e.log_likelihood);
    }
    Ok(MirtFit {
        dims,
        items,
        ability: e.eap,
        d: config.d,
        log_likelihood: trace,
        iterations,
        degenerate,
        data_digest: r.digest(),
    })
}

struct EStep {
    log_likelihood: f64,
    expected_n: Vec<Vec<f64>>,
    expected_r: Vec<Vec<f64>>,
    eap: Vec<Vec<f64>>,
}

fn e_step(
    data: &[Vec<(usize, u8)>],
    items: &[MirtItem],
    nodes: &[f64],
    log_w: &[f64],
    dims: usize,
    d: f64,
) -> EStep {
    let g = log_w.len();
    let mut log_p = vec![vec![0.0; g]; items.len()];
    let mut log_q = vec![vec![0.0; g]; items.len()];
    for (j, item) in items.iter().enumerate() {
        for k in 0..g {
            let p = mirt_response_unchecked(&nodes[k * dims..(k + 1) * dims], item, d).clamp(P_FLOOR, 1.0 - P_FLOOR);
            log_p[j][k] = p.ln();
            log_q[j][k] = (1.0 - p).ln();
        }
    }
    let mut expected_n = vec![vec![0.0; g]; items.len()];
    let mut expected_r = vec![vec![0.0; g]; items.len()];
    let mut eap = Vec::with_capacity(data.len());
    let mut total = 0.0;
    let mut post = vec![0.0; g];
    for obs in data {
        post.copy_from_slice(log_w);
        for &(j, y) in obs {
            let row = if y == 1 { &log_p[j] } else { &log_q[j] };
            for (p, l) in post.iter_mut().zip(row) {
                *p += l;
            }
        }
        let lse = log_sum_exp(&post);
        if !obs.is_empty() {
            total += lse;
        }
        let mut mean = vec![0.0; dims];
        for (k, p) in post.iter_mut().enumerate() {
            *p = (*p - lse).exp();
            for (t, mt) in mean.iter_mut().enumerate() {
                *mt += *p * nodes[k * dims + t];
            }
        }
        eap.push(mean);
        for &(j, y) in obs {
            for (n, p) in expected_n[j].iter_mut().zip(&post) {
                *n += p;
            }
            if y == 1 {
                for (r, p) in expected_r[j].iter_mut().zip(&post) {
                    *r += p;
                }
            }
        }
    }
    EStep { log_likelihood: total, expected_n, expected_r, eap }
}

fn m_step_item(
    item: &mut MirtItem,
    n: &[f64],
    r: &[f64],
    nodes: &[f64],
    dims: usize,
    config: &EmConfig,
    step: &mut f64,
) {
    let d = config.d;
    let mut x: Vec<f64> = item.disc.clone();
    x.push(item.difficulty);
    x.push(item.guess);
    let mut lo = vec![DISC_BOUNDS.0; dims];
    lo.extend([INTERCEPT_BOUNDS.0, GUESS_BOUNDS.0]);
    let mut hi = vec![DISC_BOUNDS.1; dims];
    hi.extend([INTERCEPT_BOUNDS.1, GUESS_BOUNDS.1]);
    let mut g = vec![0.0; dims + 2];
    projected_ascent(&mut x, &lo, &hi, config.inner_steps, step, |x, grad| {
        let c = x[dims + 1];
        let mut value = 0.0;
        let want_grad = grad.is_some();
        g.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n.len() {
            let node = &nodes[k * dims..(k + 1) * dims];
            let z: f64 = x[..dims].iter().zip(node).map(|(a, t)| a * t).sum::<f64>() + x[dims];
            let l = logistic(d * z);
            let p = (c + (1.0 - c) * l).clamp(P_FLOOR, 1.0 - P_FLOOR);
            value += r[k] * p.ln() + (n[k] - r[k]) * (1.0 - p).ln();
            if want_grad {
                let dp = (r[k] - n[k] * p) / (p * (1.0 - p));
                let dz = dp * (1.0 - c) * l * (1.0 - l) * d;
                for t in 0..dims {
                    g[t] += dz * node[t];
                }
                g[dims] += dz;
                g[dims + 1] += dp * (1.0 - l);
            }
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        value
    });
    item.disc = x[..dims].to_vec();
    item.difficulty = x[dims];
    item.guess = x[dims + 1];
}
