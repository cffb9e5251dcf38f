//! DINA estimation by latent-class EM over all 2^K mastery profiles.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{dina_ideal_eta, dina_response, log_sum_exp, EmConfig, PsychError};
use crate::dataio::{QMatrix, ResponseMatrix};

pub const MAX_KNOWLEDGE: usize = 20;
pub const SLIP_GUESS_FLOOR: f64 = 1e-4;
pub const SLIP_GUESS_CEIL: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DinaFit {
    pub slip: Vec<f64>,
    pub guess: Vec<f64>,
    /// Attribute-wise posterior mode per learner.
    pub alpha: Vec<Vec<u8>>,
    /// Per learner, the posterior over the 2^K profiles (profile `l` masters
    /// skill `k` iff bit `k` of `l` is set).
    pub posterior: Vec<Vec<f64>>,
    pub class_prior: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub degenerate: Vec<usize>,
    pub data_digest: String,
}

/// Mastery vector of latent class `l` over `k` skills.
pub fn class_profile(l: usize, k: usize) -> Vec<u8> {
    (0..k).map(|b| ((l >> b) & 1) as u8).collect()
}

/// η for every (class, exercise) pair, class-major.
pub(crate) fn class_eta(q: &QMatrix) -> Vec<Vec<u8>> {
    let k = q.n_knowledge();
    (0..1usize << k)
        .map(|l| {
            let profile = class_profile(l, k);
            (0..q.n_exercises()).map(|j| dina_ideal_eta(&profile, q.row(j))).collect()
        })
        .collect()
}

impl DinaFit {
    /// Posterior-weighted mixture of the DINA law over latent classes.
    pub fn predict_mixture(&self, learner: usize, exercise: usize, eta: &[Vec<u8>]) -> f64 {
        self.posterior[learner]
            .iter()
            .zip(eta)
            .map(|(w, row)| w * dina_response(row[exercise], self.slip[exercise], self.guess[exercise]))
            .sum()
    }

    /// DINA law evaluated at the learner's point-estimate mastery vector.
    pub fn predict_map(&self, learner: usize, exercise: usize, q: &QMatrix) -> f64 {
        let eta = dina_ideal_eta(&self.alpha[learner], q.row(exercise));
        dina_response(eta, self.slip[exercise], self.guess[exercise])
    }

    /// Marginal probability that the learner has mastered each skill.
    pub fn mastery_probability(&self, learner: usize) -> Vec<f64> {
        let k = self.alpha.first().map_or(0, Vec::len);
        let mut out = vec![0.0; k];
        for (l, w) in self.posterior[learner].iter().enumerate() {
            for (b, o) in out.iter_mut().enumerate() {
                if (l >> b) & 1 == 1 {
                    *o += w;
                }
            }
        }
        out
    }
}

pub fn fit_dina_em(r: &ResponseMatrix, q: &QMatrix, config: &EmConfig) -> Result<DinaFit, PsychError> {
    q.check_aligned(r)?;
    let k = q.n_knowledge();
    if k > MAX_KNOWLEDGE {
        return Err(PsychError::TooManyKnowledgePoints(k));
    }
    let n_classes = 1usize << k;
    let m = r.n_exercises();
    let eta = class_eta(q);
    let data = r.by_learner();

    let mut degenerate = Vec::new();
    for j in 0..m {
        let ys: Vec<u8> = data.iter().flat_map(|o| o.iter().filter(|(e, _)| *e == j).map(|(_, y)| *y)).collect();
        if !ys.is_empty() && ys.iter().all(|&y| y == ys[0]) {
            warn!("DINA: item {} has identical responses", r.exercise_ids()[j]);
            degenerate.push(j);
        }
    }

    let mut slip = vec![0.2; m];
    let mut guess = vec![0.2; m];
    let mut prior = vec![1.0 / n_classes as f64; n_classes];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iterations {
        let e = e_step(&data, &eta, &slip, &guess, &prior);
        let converged = trace.last().is_some_and(|prev: &f64| (e.log_likelihood - prev).abs() < config.tolerance);
        trace.push(e.log_likelihood);
        if converged {
            break;
        }
        iterations += 1;
        for j in 0..m {
            if e.n0[j] > 0.0 {
                guess[j] = (e.r0[j] / e.n0[j]).clamp(SLIP_GUESS_FLOOR, SLIP_GUESS_CEIL);
            }
            if e.n1[j] > 0.0 {
                slip[j] = ((e.n1[j] - e.r1[j]) / e.n1[j]).clamp(SLIP_GUESS_FLOOR, SLIP_GUESS_CEIL);
            }
            if slip[j] + guess[j] >= 1.0 {
                guess[j] = 1.0 - slip[j] - SLIP_GUESS_FLOOR;
            }
        }
        let n_seen = data.iter().filter(|o| !o.is_empty()).count().max(1) as f64;
        for (p, s) in prior.iter_mut().zip(&e.class_mass) {
            *p = s / n_seen;
        }
    }

    let e = e_step(&data, &eta, &slip, &guess, &prior);
    if trace.last() != Some(&e.log_likelihood) {
        trace.push(e.log_likelihood);
    }
    let alpha = e
        .posterior
        .iter()
        .map(|post| {
            let mut marg = vec![0.0; k];
            for (l, w) in post.iter().enumerate() {
                for (b, mk) in marg.iter_mut().enumerate() {
                    if (l >> b) & 1 == 1 {
                        *mk += w;
                    }
                }
            }
            marg.iter().map(|&p| u8::from(p >= 0.5)).collect()
        })
        .collect();

    Ok(DinaFit {
        slip,
        guess,
        alpha,
        posterior: e.posterior,
        class_prior: prior,
        log_likelihood: trace,
        iterations,
        degenerate,
        data_digest: r.digest(),
    })
}

struct EStep {
    log_likelihood: f64,
    posterior: Vec<Vec<f64>>,
    class_mass: Vec<f64>,
    n0: Vec<f64>,
    r0: Vec<f64>,
    n1: Vec<f64>,
    r1: Vec<f64>,
}

fn e_step(data: &[Vec<(usize, u8)>], eta: &[Vec<u8>], slip: &[f64], guess: &[f64], prior: &[f64]) -> EStep {
    let m = slip.len();
    let n_classes = prior.len();
    // log P(y | η) indexed [item][eta][y]
    let table: Vec<[[f64; 2]; 2]> = (0..m)
        .map(|j| {
            let p0 = guess[j];
            let p1 = 1.0 - slip[j];
            [[(1.0 - p0).ln(), p0.ln()], [(1.0 - p1).ln(), p1.ln()]]
        })
        .collect();
    let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();

    let mut out = EStep {
        log_likelihood: 0.0,
        posterior: Vec::with_capacity(data.len()),
        class_mass: vec![0.0; n_classes],
        n0: vec![0.0; m],
        r0: vec![0.0; m],
        n1: vec![0.0; m],
        r1: vec![0.0; m],
    };
    let mut lp = vec![0.0; n_classes];
    for obs in data {
        for (l, v) in lp.iter_mut().enumerate() {
            let row = &eta[l];
            *v = log_prior[l] + obs.iter().map(|&(j, y)| table[j][row[j] as usize][y as usize]).sum::<f64>();
        }
        let lse = log_sum_exp(&lp);
        if !obs.is_empty() {
            out.log_likelihood += lse;
        }
        let post: Vec<f64> = lp.iter().map(|v| (v - lse).exp()).collect();
        if !obs.is_empty() {
            for (c, p) in out.class_mass.iter_mut().zip(&post) {
                *c += p;
            }
        }
        for &(j, y) in obs {
            let mass1: f64 = post.iter().zip(eta).filter(|(_, row)| row[j] == 1).map(|(p, _)| p).sum();
            let mass0 = 1.0 - mass1;
            out.n1[j] += mass1;
            out.n0[j] += mass0;
            if y == 1 {
                out.r1[j] += mass1;
                out.r0[j] += mass0;
            }
        }
        out.posterior.push(post);
    }
    out
}
