/// Box-constrained gradient ascent with backtracking. Every accepted step
/// strictly increases `objective`, so an EM M-step built on it is a
/// generalized M-step and the marginal likelihood cannot decrease.
pub(crate) fn projected_ascent(
    x: &mut [f64],
    lo: &[f64],
    hi: &[f64],
    steps: usize,
    step_size: &mut f64,
    mut objective: impl FnMut(&[f64], Option<&mut [f64]>) -> f64,
) {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut current = objective(x, Some(&mut grad));
    for _ in 0..steps {
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = (x[i] + *step_size * grad[i]).clamp(lo[i], hi[i]);
            }
            if trial == x {
                break;
            }
            let value = objective(&trial, None);
            if value > current {
                x.copy_from_slice(&trial);
                accepted = true;
                *step_size *= 1.5;
                break;
            }
            *step_size *= 0.5;
        }
        if !accepted {
            break;
        }
        current = objective(x, Some(&mut grad));
    }
    *step_size = step_size.clamp(1e-12, 1e6);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_boxed_maximum() {
        // max of -(x-3)^2 - (y+1)^2 over [0,2] x [-5,5] is at (2, -1)
        let mut x = [0.5, 4.0];
        let mut step = 0.1;
        projected_ascent(&mut x, &[0.0, -5.0], &[2.0, 5.0], 200, &mut step, |p, g| {
            if let Some(g) = g {
                g[0] = -2.0 * (p[0] - 3.0);
                g[1] = -2.0 * (p[1] + 1.0);
            }
            -(p[0] - 3.0).powi(2) - (p[1] + 1.0).powi(2)
        });
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert!((x[1] + 1.0).abs() < 1e-6);
    }
}
