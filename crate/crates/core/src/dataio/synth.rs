//! Ground-truth simulators for DINA, IRT and higher-order DINA data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, QMatrix, ResponseMatrix};
use crate::psychometrics::{dina_ideal_eta, dina_response, hodina_attr_prob, irt_response, IrtItem, DEFAULT_D};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Dina,
    Irt,
    HoDina,
}

/// The generating parameters and the true per-cell success probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: Generator,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<Vec<Vec<u8>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slip: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub guess: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub difficulty: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub discrimination: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda1: Option<Vec<f64>>,
    /// learners × exercises, row-major.
    pub bayes_prob: Vec<Vec<f64>>,
}

impl GroundTruth {
    pub fn prob(&self, learner: usize, exercise: usize) -> f64 {
        self.bayes_prob[learner][exercise]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_prob_range(name: &str, r: Interval) -> Result<(), DataError> {
    // 0 is allowed so the noiseless limit can be generated.
    if !(r.lo >= 0.0 && r.hi < 0.5 && r.lo <= r.hi) {
        return Err(DataError::InvalidRange(format!("{name} range [{}, {}] not within [0, 0.5)", r.lo, r.hi)));
    }
    Ok(())
}

/// Random Q-matrix where each row requires 1–3 distinct skills.
pub fn random_q_matrix(n_exercises: usize, n_knowledge: usize, rng: &mut impl Rng) -> QMatrix {
    let mut cells = vec![0u8; n_exercises * n_knowledge];
    for j in 0..n_exercises {
        let count = rng.random_range(1..=n_knowledge.min(3));
        let mut skills: Vec<usize> = (0..n_knowledge).collect();
        for pick in 0..count {
            let s = rng.random_range(pick..n_knowledge);
            skills.swap(pick, s);
            cells[j * n_knowledge + skills[pick]] = 1;
        }
    }
    QMatrix::new(ids("e", n_exercises), ids("k", n_knowledge), cells).expect("generated Q is valid")
}

/// Simulates a fully observed DINA response matrix for given skills and items.
pub fn simulate_dina(
    q: &QMatrix,
    alphas: &[Vec<u8>],
    slip: &[f64],
    guess: &[f64],
    rng: &mut impl Rng,
) -> (ResponseMatrix, Vec<Vec<f64>>) {
    let m = q.n_exercises();
    let mut cells = Vec::with_capacity(alphas.len() * m);
    let mut probs = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let eta = dina_ideal_eta(alpha, q.row(j));
            let p = dina_response(eta, slip[j], guess[j]);
            row.push(p);
            cells.push(Some(u8::from(rng.random::<f64>() < p)));
        }
        probs.push(row);
    }
    let r = ResponseMatrix::from_parts_unchecked(ids("s", alphas.len()), q.exercise_ids().to_vec(), cells)
        .expect("shape is consistent");
    (r, probs)
}

pub fn generate_synthetic_dina(
    n_learners: usize,
    n_exercises: usize,
    n_knowledge: usize,
    slip_range: Interval,
    guess_range: Interval,
    seed: u64,
) -> Result<(ResponseMatrix, QMatrix, GroundTruth), DataError> {
    check_counts(n_learners, n_exercises)?;
    check_knowledge(n_knowledge)?;
    check_prob_range("slip", slip_range)?;
    check_prob_range("guess", guess_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let alphas: Vec<Vec<u8>> = (0..n_learners)
        .map(|_| (0..n_knowledge).map(|_| u8::from(rng.random::<bool>())).collect())
        .collect();
    let q = random_q_matrix(n_exercises, n_knowledge, &mut rng);
    let slip: Vec<f64> = (0..n_exercises).map(|_| slip_range.sample(&mut rng)).collect();
    let guess: Vec<f64> = (0..n_exercises).map(|_| guess_range.sample(&mut rng)).collect();
    let (r, bayes_prob) = simulate_dina(&q, &alphas, &slip, &guess, &mut rng);

    let truth = GroundTruth {
        generator: Generator::Dina,
        alpha: Some(alphas),
        theta: None,
        slip: Some(slip),
        guess: Some(guess),
        difficulty: None,
        discrimination: None,
        lambda0: None,
        lambda1: None,
        bayes_prob,
    };
    Ok((r, q, truth))
}

pub fn generate_synthetic_irt(
    n_learners: usize,
    n_exercises: usize,
    seed: u64,
) -> Result<(ResponseMatrix, GroundTruth), DataError> {
    check_counts(n_learners, n_exercises)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_learners).map(|_| StandardNormal.sample(&mut rng)).collect();
    let items: Vec<IrtItem> = (0..n_exercises)
        .map(|_| {
            let difficulty: f64 = StandardNormal.sample(&mut rng);
            IrtItem {
                difficulty,
                discrimination: rng.random_range(0.5..=2.5),
                guess: rng.random_range(0.0..=0.25),
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(n_learners * n_exercises);
    let mut bayes_prob = Vec::with_capacity(n_learners);
    for &t in &theta {
        let mut row = Vec::with_capacity(n_exercises);
        for item in &items {
            let p = irt_response(t, item, DEFAULT_D);
            row.push(p);
            cells.push(Some(u8::from(rng.random::<f64>() < p)));
        }
        bayes_prob.push(row);
    }
    let r = ResponseMatrix::from_parts_unchecked(ids("s", n_learners), ids("e", n_exercises), cells)?;
    let truth = GroundTruth {
        generator: Generator::Irt,
        alpha: None,
        theta: Some(theta),
        slip: None,
        guess: Some(items.iter().map(|i| i.guess).collect()),
        difficulty: Some(items.iter().map(|i| i.difficulty).collect()),
        discrimination: Some(items.iter().map(|i| i.discrimination).collect()),
        lambda0: None,
        lambda1: None,
        bayes_prob,
    };
    Ok((r, truth))
}

/// Higher-order DINA data: θ ~ N(0,1), each skill mastered with probability
/// σ(λ0 + λ1·θ), responses from the DINA law with a common slip and guess.
#[allow(clippy::too_many_arguments)]
pub fn generate_synthetic_hodina(
    n_learners: usize,
    n_exercises: usize,
    n_knowledge: usize,
    lambda0: f64,
    lambda1: f64,
    slip: f64,
    guess: f64,
    seed: u64,
) -> Result<(ResponseMatrix, QMatrix, GroundTruth), DataError> {
    check_counts(n_learners, n_exercises)?;
    check_knowledge(n_knowledge)?;
    check_prob_range("slip", Interval::new(slip, slip))?;
    check_prob_range("guess", Interval::new(guess, guess))?;
    if lambda1 <= 0.0 {
        return Err(DataError::InvalidRange(format!("lambda1 must be positive, got {lambda1}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_learners).map(|_| StandardNormal.sample(&mut rng)).collect();
    let alphas: Vec<Vec<u8>> = theta
        .iter()
        .map(|&t| {
            let p = hodina_attr_prob(t, lambda0, lambda1);
            (0..n_knowledge).map(|_| u8::from(rng.random::<f64>() < p)).collect()
        })
        .collect();
    let q = random_q_matrix(n_exercises, n_knowledge, &mut rng);
    let slips = vec![slip; n_exercises];
    let guesses = vec![guess; n_exercises];
    let (r, bayes_prob) = simulate_dina(&q, &alphas, &slips, &guesses, &mut rng);
    let truth = GroundTruth {
        generator: Generator::HoDina,
        alpha: Some(alphas),
        theta: Some(theta),
        slip: Some(slips),
        guess: Some(guesses),
        difficulty: None,
        discrimination: None,
        lambda0: Some(vec![lambda0; n_knowledge]),
        lambda1: Some(vec![lambda1; n_knowledge]),
        bayes_prob,
    };
    Ok((r, q, truth))
}

fn check_counts(n_learners: usize, n_exercises: usize) -> Result<(), DataError> {
    if n_learners == 0 || n_exercises == 0 {
        return Err(DataError::InvalidRange("learner and exercise counts must be at least 1".into()));
    }
    Ok(())
}

fn check_knowledge(k: usize) -> Result<(), DataError> {
    if k == 0 || k > 20 {
        return Err(DataError::InvalidRange(format!("knowledge count {k} outside [1, 20]")));
    }
    Ok(())
}
