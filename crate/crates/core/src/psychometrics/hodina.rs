//! Higher-order DINA by Metropolis-within-Gibbs.
//!
//! One sweep updates, in order: every θ_i by random-walk Metropolis, every
//! α_ik by an exact Gibbs draw from its full conditional, every item's
//! (slip, guess) pair by a joint random-walk proposal, and every skill's
//! (λ0, λ1) pair by a joint random-walk proposal. Point estimates are
//! post-burn-in posterior means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{dina_response, hodina_attr_prob, PsychError};
use crate::dataio::{QMatrix, ResponseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub theta_sd: f64,
    pub item_sd: f64,
    pub lambda_sd: f64,
    /// Variance of the normal priors on λ0 and λ1.
    pub lambda_prior_var: f64,
    /// Sweeps per acceptance-rate check.
    pub window: usize,
    pub min_acceptance: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            sweeps: 5000,
            burn_in: 2500,
            theta_sd: 0.3,
            item_sd: 0.05,
            lambda_sd: 0.3,
            lambda_prior_var: 4.0,
            window: 500,
            min_acceptance: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoDinaFit {
    pub theta: Vec<f64>,
    /// Indicator of posterior mastery mean ≥ 0.5.
    pub alpha: Vec<Vec<u8>>,
    pub alpha_mean: Vec<Vec<f64>>,
    pub slip: Vec<f64>,
    pub guess: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
    /// Posterior probability that η = 1, learners × exercises.
    pub eta_prob: Vec<Vec<f64>>,
    pub acceptance: AcceptanceRates,
    /// Every post-burn-in λ1 draw was positive.
    pub lambda1_min_draw: f64,
    pub sweeps: usize,
    pub data_digest: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub theta: f64,
    pub item: f64,
    pub lambda: f64,
}

impl HoDinaFit {
    /// DINA law mixed over the posterior of η.
    pub fn predict(&self, learner: usize, exercise: usize) -> f64 {
        let p1 = self.eta_prob[learner][exercise];
        p1 * dina_response(1, self.slip[exercise], self.guess[exercise])
            + (1.0 - p1) * dina_response(0, self.slip[exercise], self.guess[exercise])
    }
}

#[derive(Default, Clone, Copy)]
struct Counter {
    tried: u64,
    accepted: u64,
}

impl Counter {
    fn rate(&self) -> f64 {
        if self.tried == 0 {
            1.0
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

#[inline]
fn log_bern(p: f64, y: u8) -> f64 {
    if y == 1 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

pub fn fit_hodina_mcmc(r: &ResponseMatrix, q: &QMatrix, config: &McmcConfig) -> Result<HoDinaFit, PsychError> {
    q.check_aligned(r)?;
    let k = q.n_knowledge();
    if k > super::dina::MAX_KNOWLEDGE {
        return Err(PsychError::TooManyKnowledgePoints(k));
    }
    if config.burn_in >= config.sweeps {
        return Err(PsychError::InvalidConfig("burn_in must be below sweeps".into()));
    }
    let n = r.n_learners();
    let m = r.n_exercises();
    let data = r.by_learner();
    let required: Vec<Vec<usize>> = (0..m).map(|j| (0..k).filter(|&s| q.get(j, s) == 1).collect()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Initial mastery: majority correct on the items touching each skill.
    let mut alpha: Vec<Vec<u8>> = data
        .iter()
        .map(|obs| {
            (0..k)
                .map(|s| {
                    let (hit, tot) = obs
                        .iter()
                        .filter(|(j, _)| q.get(*j, s) == 1)
                        .fold((0, 0), |(h, t), &(_, y)| (h + y as usize, t + 1));
                    u8::from(tot > 0 && 2 * hit >= tot)
                })
                .collect()
        })
        .collect();
    let mut theta = vec![0.0; n];
    let mut slip = vec![0.2; m];
    let mut guess = vec![0.2; m];
    let mut lambda0 = vec![0.0; k];
    let mut lambda1 = vec![1.0; k];

    let mut sum_theta = vec![0.0; n];
    let mut sum_alpha = vec![vec![0.0; k]; n];
    let mut sum_eta = vec![vec![0.0; m]; n];
    let mut sum_slip = vec![0.0; m];
    let mut sum_guess = vec![0.0; m];
    let mut sum_l0 = vec![0.0; k];
    let mut sum_l1 = vec![0.0; k];
    let mut min_l1 = f64::INFINITY;
    let (mut acc_theta, mut acc_item, mut acc_lambda) = (Counter::default(), Counter::default(), Counter::default());
    let (mut win_theta, mut win_item, mut win_lambda) = (Counter::default(), Counter::default(), Counter::default());
    let mut eta = vec![vec![0u8; m]; n];

    let prior_sd = config.lambda_prior_var.sqrt();
    let log_prior_lambda = |l: f64| -0.5 * (l / prior_sd).powi(2);

    for sweep in 0..config.sweeps {
        // θ_i | α_i, λ
        for i in 0..n {
            let cur = theta[i];
            let prop = cur + config.theta_sd * std_normal.sample(&mut rng);
            let ll = |t: f64| -> f64 {
                -0.5 * t * t
                    + (0..k).map(|s| log_bern(hodina_attr_prob(t, lambda0[s], lambda1[s]), alpha[i][s])).sum::<f64>()
            };
            let log_ratio = ll(prop) - ll(cur);
            win_theta.tried += 1;
            if rng.random::<f64>().ln() < log_ratio {
                theta[i] = prop;
                win_theta.accepted += 1;
            }
        }

        // α_ik | θ_i, λ_k, slip, guess, responses
        for i in 0..n {
            let obs = &data[i];
            for s in 0..k {
                let p_prior = hodina_attr_prob(theta[i], lambda0[s], lambda1[s]);
                let mut ll1 = p_prior.ln();
                let mut ll0 = (1.0 - p_prior).ln();
                for &(j, y) in obs {
                    if q.get(j, s) == 0 {
                        continue;
                    }
                    let others = required[j].iter().all(|&t| t == s || alpha[i][t] == 1);
                    ll1 += log_bern(dina_response(u8::from(others), slip[j], guess[j]), y);
                    ll0 += log_bern(guess[j], y);
                }
                let p1 = 1.0 / (1.0 + (ll0 - ll1).exp());
                alpha[i][s] = u8::from(rng.random::<f64>() < p1);
            }
            for j in 0..m {
                eta[i][j] = u8::from(required[j].iter().all(|&t| alpha[i][t] == 1));
            }
        }

        // (slip_j, guess_j) | η, responses ; sufficient statistics per item
        let mut stats = vec![[0u32; 4]; m]; // [n1, right1, n0, right0]
        for (i, obs) in data.iter().enumerate() {
            for &(j, y) in obs {
                let e = eta[i][j];
                let base = if e == 1 { 0 } else { 2 };
                stats[j][base] += 1;
                stats[j][base + 1] += y as u32;
            }
        }
        for j in 0..m {
            let [n1, c1, n0, c0] = stats[j].map(f64::from);
            let ll = |s: f64, g: f64| c1 * (1.0 - s).ln() + (n1 - c1) * s.ln() + c0 * g.ln() + (n0 - c0) * (1.0 - g).ln();
            let ps = slip[j] + config.item_sd * std_normal.sample(&mut rng);
            let pg = guess[j] + config.item_sd * std_normal.sample(&mut rng);
            win_item.tried += 1;
            // Uniform(0, 0.5) priors with s + g < 1.
            if ps <= 0.0 || ps >= 0.5 || pg <= 0.0 || pg >= 0.5 || ps + pg >= 1.0 {
                continue;
            }
            if rng.random::<f64>().ln() < ll(ps, pg) - ll(slip[j], guess[j]) {
                slip[j] = ps;
                guess[j] = pg;
                win_item.accepted += 1;
            }
        }

        // (λ0_k, λ1_k) | θ, α
        for s in 0..k {
            let p0 = lambda0[s] + config.lambda_sd * std_normal.sample(&mut rng);
            let p1 = lambda1[s] + config.lambda_sd * std_normal.sample(&mut rng);
            win_lambda.tried += 1;
            if p1 <= 0.0 {
                continue;
            }
            let ll = |l0: f64, l1: f64| -> f64 {
                log_prior_lambda(l0)
                    + log_prior_lambda(l1)
                    + (0..n).map(|i| log_bern(hodina_attr_prob(theta[i], l0, l1), alpha[i][s])).sum::<f64>()
            };
            if rng.random::<f64>().ln() < ll(p0, p1) - ll(lambda0[s], lambda1[s]) {
                lambda0[s] = p0;
                lambda1[s] = p1;
                win_lambda.accepted += 1;
            }
        }

        if (sweep + 1) % config.window == 0 {
            for (name, c) in [("theta", win_theta), ("item", win_item), ("lambda", win_lambda)] {
                if c.tried > 0 && c.rate() < config.min_acceptance {
                    return Err(PsychError::ChainDiverged {
                        block: name.to_string(),
                        rate: c.rate(),
                        sweep: sweep + 1,
                    });
                }
            }
            for (total, w) in [(&mut acc_theta, &mut win_theta), (&mut acc_item, &mut win_item), (&mut acc_lambda, &mut win_lambda)] {
                total.tried += w.tried;
                total.accepted += w.accepted;
                *w = Counter::default();
            }
        }

        if sweep >= config.burn_in {
            for i in 0..n {
                sum_theta[i] += theta[i];
                for s in 0..k {
                    sum_alpha[i][s] += alpha[i][s] as f64;
                }
                for j in 0..m {
                    sum_eta[i][j] += eta[i][j] as f64;
                }
            }
            for j in 0..m {
                sum_slip[j] += slip[j];
                sum_guess[j] += guess[j];
            }
            for s in 0..k {
                sum_l0[s] += lambda0[s];
                sum_l1[s] += lambda1[s];
                min_l1 = min_l1.min(lambda1[s]);
            }
        }
    }
    for (total, w) in [(&mut acc_theta, win_theta), (&mut acc_item, win_item), (&mut acc_lambda, win_lambda)] {
        total.tried += w.tried;
        total.accepted += w.accepted;
    }

    let kept = (config.sweeps - config.burn_in) as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / kept).collect::<Vec<_>>();
    let alpha_mean: Vec<Vec<f64>> = sum_alpha.into_iter().map(scale).collect();
    Ok(HoDinaFit {
        theta: scale(sum_theta),
        alpha: alpha_mean.iter().map(|row| row.iter().map(|&p| u8::from(p >= 0.5)).collect()).collect(),
        alpha_mean,
        slip: scale(sum_slip),
        guess: scale(sum_guess),
        lambda0: scale(sum_l0),
        lambda1: scale(sum_l1),
        eta_prob: sum_eta.into_iter().map(scale).collect(),
        acceptance: AcceptanceRates { theta: acc_theta.rate(), item: acc_item.rate(), lambda: acc_lambda.rate() },
        lambda1_min_draw: min_l1,
        sweeps: config.sweeps,
        data_digest: r.digest(),
    })
}
