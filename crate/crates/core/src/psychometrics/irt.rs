//! Unidimensional 3PL estimation by marginal maximum likelihood (EM over a
//! fixed ability grid), with EAP abilities.

use log::warn;
use serde::{Deserialize, Serialize};

use super::ascent::projected_ascent;
use super::quadrature::equispaced_normal_grid;
use super::{irt_response, log_sum_exp, EmConfig, IrtItem, PsychError};
use crate::dataio::ResponseMatrix;

pub const IRT_GRID_POINTS: usize = 41;
pub const IRT_GRID_BOUND: f64 = 4.0;

const DISC_BOUNDS: (f64, f64) = (0.01, 4.0);
const DIFF_BOUNDS: (f64, f64) = (-4.0, 4.0);
const GUESS_BOUNDS: (f64, f64) = (0.0, 0.5);
const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrtFit {
    pub items: Vec<IrtItem>,
    pub theta: Vec<f64>,
    pub d: f64,
    /// Marginal log-likelihood at the start of each iteration plus the final value.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    /// Items whose observed responses were all identical; their parameters
    /// sit on the box boundary.
    pub degenerate: Vec<usize>,
    pub data_digest: String,
}

impl IrtFit {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().unwrap_or(&f64::NAN)
    }

    pub fn predict(&self, learner: usize, exercise: usize) -> f64 {
        irt_response(self.theta[learner], &self.items[exercise], self.d)
    }
}

/// Starting values used by [`fit_irt_em`]: unit discrimination, small guess,
/// difficulty from the observed proportion correct.
pub fn initial_irt_items(r: &ResponseMatrix, d: f64) -> Vec<IrtItem> {
    let (right, seen) = item_counts(r);
    (0..r.n_exercises())
        .map(|j| {
            let p = if seen[j] > 0 { right[j] as f64 / seen[j] as f64 } else { 0.5 };
            let p = p.clamp(0.02, 0.98);
            let logit = (p / (1.0 - p)).ln();
            IrtItem {
                difficulty: (-logit * std::f64::consts::SQRT_2 / d).clamp(DIFF_BOUNDS.0, DIFF_BOUNDS.1),
                discrimination: 1.0,
                guess: 0.05,
            }
        })
        .collect()
}

fn item_counts(r: &ResponseMatrix) -> (Vec<usize>, Vec<usize>) {
    let mut right = vec![0usize; r.n_exercises()];
    let mut seen = vec![0usize; r.n_exercises()];
    for c in r.observed_cells() {
        seen[c.exercise] += 1;
        right[c.exercise] += r.get(c.learner, c.exercise).unwrap_or(0) as usize;
    }
    (right, seen)
}

pub fn fit_irt_em(r: &ResponseMatrix, config: &EmConfig) -> Result<IrtFit, PsychError> {
    let (right, seen) = item_counts(r);
    let informative = (0..r.n_exercises()).filter(|&j| right[j] > 0 && right[j] < seen[j]).count();
    let learners_seen = r.by_learner().iter().filter(|l| !l.is_empty()).count();
    if informative < 2 || learners_seen < 2 {
        return Err(PsychError::InsufficientData(
            "IRT needs at least 2 learners and 2 items with both outcomes observed".into(),
        ));
    }

    let d = config.d;
    let mut items = initial_irt_items(r, d);
    let mut degenerate = Vec::new();
    for j in 0..r.n_exercises() {
        if seen[j] > 0 && (right[j] == 0 || right[j] == seen[j]) {
            let all_right = right[j] == seen[j];
            items[j] = IrtItem {
                difficulty: if all_right { DIFF_BOUNDS.0 } else { DIFF_BOUNDS.1 },
                discrimination: 1.0,
                guess: 0.0,
            };
            warn!("IRT: item {} has identical responses; clamped to boundary", r.exercise_ids()[j]);
            degenerate.push(j);
        }
    }

    let (nodes, weights) = equispaced_normal_grid(IRT_GRID_POINTS, -IRT_GRID_BOUND, IRT_GRID_BOUND);
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let data = r.by_learner();
    let mut steps = vec![1.0 / r.n_learners().max(1) as f64; r.n_exercises()];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        let e = e_step(&data, &items, &nodes, &log_w, d);
        let converged = trace.last().is_some_and(|prev: &f64| (e.log_likelihood - prev).abs() < config.tolerance);
        trace.push(e.log_likelihood);
        if converged {
            break;
        }
        iterations += 1;
        for j in 0..items.len() {
            if degenerate.contains(&j) || seen[j] == 0 {
                continue;
            }
            m_step_item(&mut items[j], &e.expected_n[j], &e.expected_r[j], &nodes, d, config.inner_steps, &mut steps[j]);
        }
    }

    let e = e_step(&data, &items, &nodes, &log_w, d);
    if trace.last() != Some(&e.log_likelihood) {
        trace.push(e.log_likelihood);
    }
    Ok(IrtFit {
        items,
        theta: e.eap,
        d,
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
    eap: Vec<f64>,
}

fn e_step(data: &[Vec<(usize, u8)>], items: &[IrtItem], nodes: &[f64], log_w: &[f64], d: f64) -> EStep {
    let g = nodes.len();
    let mut log_p = vec![vec![0.0; g]; items.len()];
    let mut log_q = vec![vec![0.0; g]; items.len()];
    for (j, item) in items.iter().enumerate() {
        for (k, &t) in nodes.iter().enumerate() {
            let p = irt_response(t, item, d).clamp(P_FLOOR, 1.0 - P_FLOOR);
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
        for p in post.iter_mut() {
            *p = (*p - lse).exp();
        }
        eap.push(post.iter().zip(nodes).map(|(p, t)| p * t).sum());
        for &(j, y) in obs {
            for k in 0..g {
                expected_n[j][k] += post[k];
            }
            if y == 1 {
                for k in 0..g {
                    expected_r[j][k] += post[k];
                }
            }
        }
    }
    EStep { log_likelihood: total, expected_n, expected_r, eap }
}

fn m_step_item(item: &mut IrtItem, n: &[f64], r: &[f64], nodes: &[f64], d: f64, steps: usize, step: &mut f64) {
    let mut x = [item.discrimination, item.difficulty, item.guess];
    let lo = [DISC_BOUNDS.0, DIFF_BOUNDS.0, GUESS_BOUNDS.0];
    let hi = [DISC_BOUNDS.1, DIFF_BOUNDS.1, GUESS_BOUNDS.1];
    projected_ascent(&mut x, &lo, &hi, steps, step, |x, grad| {
        let (a, b, c) = (x[0], x[1], x[2]);
        let mut value = 0.0;
        let mut g = [0.0; 3];
        for k in 0..nodes.len() {
            let l = super::logistic(d * a * (nodes[k] - b));
            let p = (c + (1.0 - c) * l).clamp(P_FLOOR, 1.0 - P_FLOOR);
            value += r[k] * p.ln() + (n[k] - r[k]) * (1.0 - p).ln();
            if grad.is_some() {
                let dp = (r[k] - n[k] * p) / (p * (1.0 - p));
                let dl = (1.0 - c) * l * (1.0 - l) * d;
                g[0] += dp * dl * (nodes[k] - b);
                g[1] -= dp * dl * a;
                g[2] += dp * (1.0 - l);
            }
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        value
    });
    item.discrimination = x[0];
    item.difficulty = x[1];
    item.guess = x[2];
}
