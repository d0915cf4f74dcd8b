//! Central finite-difference gradient checks.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Largest elementwise relative error between analytic and central-difference
/// gradients of a scalar function of `inputs`.
///
/// The relative error is `|a − n| / max(|a|, |n|, floor)`; the floor keeps
/// entries that are zero up to rounding from dominating.
pub fn gradcheck<F>(inputs: &[Tensor], f: F, step: f64, floor: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.input(x.clone())).collect();
        let out = f(&mut t, &vars)?;
        let v = t.value(out);
        if v.len() != 1 {
            return Err(Error::NotScalar(v.shape().to_vec()));
        }
        Ok(v.item())
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.input(x.clone())).collect();
    let out = f(&mut t, &vars)?;
    let grads = t.backward(out)?;
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for k in 0..inputs[i].len() {
            let x0 = inputs[i].data()[k];
            xs[i].data_mut()[k] = x0 + step;
            let up = eval(&xs)?;
            xs[i].data_mut()[k] = x0 - step;
            let down = eval(&xs)?;
            xs[i].data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
