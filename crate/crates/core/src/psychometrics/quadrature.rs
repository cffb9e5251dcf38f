//! Fixed ability grids for marginal maximum likelihood.

/// `n` equally spaced nodes on `[lo, hi]` with normalized standard-normal weights.
pub fn equispaced_normal_grid(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "grid needs at least two nodes");
    let nodes: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let raw: Vec<f64> = nodes.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let total: f64 = raw.iter().sum();
    (nodes, raw.into_iter().map(|w| w / total).collect())
}

// Physicists' 7-point Gauss–Hermite rule (weight e^{-x^2}).
const GH7_NODES: [f64; 4] = [0.0, 0.816_287_882_858_964_7, 1.673_551_628_767_471_4, 2.651_961_356_835_233_5];
const GH7_WEIGHTS: [f64; 4] = [
    0.810_264_617_556_807_3,
    0.425_607_252_610_127_8,
    0.054_515_582_819_127_03,
    0.000_971_781_245_099_519_2,
];

/// 7-point Gauss–Hermite rule rescaled to integrate against N(0, 1).
pub fn gauss_hermite7_normal() -> (Vec<f64>, Vec<f64>) {
    let scale = std::f64::consts::SQRT_2;
    let norm = std::f64::consts::PI.sqrt();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(7);
    for (i, (&x, &w)) in GH7_NODES.iter().zip(&GH7_WEIGHTS).enumerate() {
        pts.push((x * scale, w / norm));
        if i > 0 {
            pts.push((-x * scale, w / norm));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

/// Tensor-product grid of the 7-point rule in `dims` dimensions.
/// Nodes are returned flattened, `dims` coordinates per node.
pub fn product_grid(dims: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite7_normal();
    let n = x.len().pow(dims as u32);
    let mut nodes = Vec::with_capacity(n * dims);
    let mut weights = Vec::with_capacity(n);
    for idx in 0..n {
        let mut rem = idx;
        let mut weight = 1.0;
        for _ in 0..dims {
            let k = rem % x.len();
            rem /= x.len();
            nodes.push(x[k]);
            weight *= w[k];
        }
        weights.push(weight);
    }
    (nodes, weights)
}
