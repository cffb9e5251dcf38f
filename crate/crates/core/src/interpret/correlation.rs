use serde::{Deserialize, Serialize};

use super::InterpretError;
use crate::dataio::Cell;
use crate::diagnosis::LdmModel;

/// Pearson correlations between learner-latent dims (rows) and
/// exercise-latent dims (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub values: Vec<f64>,
    /// Learner dims with zero variance over the batch; their entries are 0.
    pub degenerate_learner: Vec<usize>,
    pub degenerate_exercise: Vec<usize>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// `dim,e1,..,eN` header, one line per learner dim. Degenerate dims are
    /// listed in trailing `#` comment lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dim");
        for j in 0..self.cols {
            s.push_str(&format!(",e{}", j + 1));
        }
        s.push('\n');
        for i in 0..self.rows {
            s.push_str(&format!("s{}", i + 1));
            for j in 0..self.cols {
                s.push_str(&format!(",{}", self.get(i, j)));
            }
            s.push('\n');
        }
        let list = |v: &[usize], tag: char| v.iter().map(|d| format!("{tag}{}", d + 1)).collect::<Vec<_>>().join(" ");
        if !self.degenerate_learner.is_empty() {
            s.push_str(&format!("# degenerate learner dims: {}\n", list(&self.degenerate_learner, 's')));
        }
        if !self.degenerate_exercise.is_empty() {
            s.push_str(&format!("# degenerate exercise dims: {}\n", list(&self.degenerate_exercise, 'e')));
        }
        s
    }
}

fn centered(batch: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>), InterpretError> {
    let d = batch[0].len();
    let n = batch.len() as f64;
    for (row, v) in batch.iter().enumerate() {
        if v.len() != d {
            return Err(InterpretError::Ragged { row, got: v.len(), expected: d });
        }
    }
    let mut cols = vec![vec![0.0; batch.len()]; d];
    let mut norms = vec![0.0; d];
    for k in 0..d {
        let mean = batch.iter().map(|v| v[k]).sum::<f64>() / n;
        for (r, v) in batch.iter().enumerate() {
            cols[k][r] = v[k] - mean;
        }
        norms[k] = cols[k].iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    Ok((cols, norms))
}

/// Row `r` of `hs` and `he` must describe the same (learner, exercise) cell.
pub fn latent_correlation(hs: &[Vec<f64>], he: &[Vec<f64>]) -> Result<CorrelationMatrix, InterpretError> {
    if hs.len() != he.len() {
        return Err(InterpretError::LengthMismatch(hs.len(), he.len()));
    }
    if hs.len() < 3 {
        return Err(InterpretError::BatchTooSmall(hs.len()));
    }
    let (xs, ns) = centered(hs)?;
    let (xe, ne) = centered(he)?;
    // A dimension counts as constant once its spread is at rounding level.
    let flat = |x: &[f64], norm: f64| norm <= 1e-12 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let deg_s: Vec<usize> = (0..xs.len()).filter(|&i| flat(&xs[i], ns[i])).collect();
    let deg_e: Vec<usize> = (0..xe.len()).filter(|&j| flat(&xe[j], ne[j])).collect();
    let mut values = Vec::with_capacity(xs.len() * xe.len());
    for i in 0..xs.len() {
        for j in 0..xe.len() {
            if deg_s.contains(&i) || deg_e.contains(&j) {
                values.push(0.0);
                continue;
            }
            let dot: f64 = xs[i].iter().zip(&xe[j]).map(|(a, b)| a * b).sum();
            values.push((dot / (ns[i] * ne[j])).clamp(-1.0, 1.0));
        }
    }
    Ok(CorrelationMatrix {
        rows: xs.len(),
        cols: xe.len(),
        values,
        degenerate_learner: deg_s,
        degenerate_exercise: deg_e,
    })
}

/// Correlates the model's frozen learner and exercise latents over `cells`.
pub fn model_latent_correlation(model: &LdmModel, cells: &[Cell]) -> Result<CorrelationMatrix, InterpretError> {
    if !model.network.layout.use_deep {
        return Err(InterpretError::NoLatents);
    }
    let n_l = model.sets.sc.ids.len();
    let n_e = model.sets.ec.ids.len();
    let mut hs = Vec::with_capacity(cells.len());
    let mut he = Vec::with_capacity(cells.len());
    for c in cells {
        if c.learner >= n_l {
            return Err(InterpretError::UnknownLearner(format!("#{}", c.learner)));
        }
        if c.exercise >= n_e {
            return Err(InterpretError::UnknownExercise(format!("#{}", c.exercise)));
        }
        hs.push(model.learner_latent(c.learner).to_vec());
        he.push(model.exercise_latent(c.exercise).to_vec());
    }
    latent_correlation(&hs, &he)
}
