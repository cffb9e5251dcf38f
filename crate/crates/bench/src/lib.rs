//! Fixtures shared by the benchmarks.

use ldiag::dataio::{generate_synthetic_dina, Cell, Interval, QMatrix, ResponseMatrix};
use ldiag::diagnosis::{Batch, Layout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dina_data(learners: usize, exercises: usize, knowledge: usize) -> (ResponseMatrix, QMatrix) {
    let range = Interval::new(0.05, 0.3);
    let (r, q, _) = generate_synthetic_dina(learners, exercises, knowledge, range, range, 7).expect("valid shape");
    (r, q)
}

pub fn labelled_scores(n: usize, seed: u64) -> (Vec<u8>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let scores = labels.iter().map(|&y| 0.3 * y as f64 + rng.random::<f64>()).collect();
    (labels, scores)
}

/// Layout of the default network on ldm-id data with 5 knowledge points.
pub fn default_layout() -> Layout {
    Layout {
        d2: 128,
        d3: 64,
        d4: 64,
        d_s: 6,
        d_e: 4,
        attn_channels: 16,
        conv_channels: 8,
        conv_kernel: 3,
        pool_window: 2,
        use_deep: true,
        use_attention: true,
    }
}

pub fn random_batch(layout: &Layout, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    Batch { n, hs: draw(layout.d2), he: draw(layout.d3), sc: draw(layout.d_s), ec: draw(layout.d_e) }
}

pub fn first_cells(r: &ResponseMatrix, n: usize) -> Vec<Cell> {
    r.observed_cells().into_iter().take(n).collect()
}
