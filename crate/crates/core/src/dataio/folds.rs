use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, DataError, ResponseMatrix};

/// Assignment of every observed cell to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    cells: Vec<Cell>,
    fold_of: Vec<usize>,
}

/// Shuffles the observed cells with `seed` and deals them round-robin, so fold
/// sizes differ by at most one and the first `n mod k` folds get the extra.
pub fn split_folds(r: &ResponseMatrix, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    let cells = r.observed_cells();
    if k < 2 || cells.len() < k {
        return Err(DataError::TooFewObservations { observed: cells.len(), folds: k });
    }
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; cells.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % k;
    }
    Ok(FoldPlan { k, cells, fold_of })
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    /// All cells covered by the plan, row-major.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn fold_of(&self, idx: usize) -> usize {
        self.fold_of[idx]
    }

    pub fn test_cells(&self, fold: usize) -> Vec<Cell> {
        self.select(|f| f == fold)
    }

    pub fn train_cells(&self, fold: usize) -> Vec<Cell> {
        self.select(|f| f != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    fn select(&self, pred: impl Fn(usize) -> bool) -> Vec<Cell> {
        self.cells
            .iter()
            .zip(&self.fold_of)
            .filter(|(_, &f)| pred(f))
            .map(|(c, _)| *c)
            .collect()
    }
}
