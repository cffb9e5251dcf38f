use super::{NdError, Tape, Tensor, Var};

/// Max over coordinates of |a - b| / max(1e-8, |a| + |b|) between the tape
/// gradient and central differences with step `h`.
///
/// `f` must be scalar-valued and smooth at `point`; relu kinks are the
/// caller's problem.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64, NdError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NdError>,
{
    let mut x = point.clone().with_grad();
    let mut tape = Tape::new();
    let v = tape.leaf(&x);
    let out = f(&mut tape, v)?;
    tape.backward(out)?;
    let analytic = tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |t: &Tensor| -> Result<f64, NdError> {
        let mut tape = Tape::new();
        let v = tape.leaf(t);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out)[0])
    };
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x.values[i];
        x.values[i] = orig + h;
        let up = eval(&x)?;
        x.values[i] = orig - h;
        let down = eval(&x)?;
        x.values[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
    }
    Ok(worst)
}
