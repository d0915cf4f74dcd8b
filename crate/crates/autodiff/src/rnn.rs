//! Gated recurrent cells built from tape primitives.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// GRU with fused gate weights in (update, reset, candidate) order:
/// `z = σ(x·Wz + h·Uz + b)`, `r = σ(…)`, `n = tanh(x·Wn + bn + r ⊙ (h·Un + b'n))`,
/// `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    wx: ParamId,
    wh: ParamId,
    bx: ParamId,
    bh: ParamId,
}

impl GruCell {
    /// Register zero-initialized weights under `prefix`.
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            input,
            hidden,
            wx: store.add(format!("{prefix}.wx"), Tensor::zeros(&[input, 3 * hidden]))?,
            wh: store.add(format!("{prefix}.wh"), Tensor::zeros(&[hidden, 3 * hidden]))?,
            bx: store.add(format!("{prefix}.bx"), Tensor::zeros(&[3 * hidden]))?,
            bh: store.add(format!("{prefix}.bh"), Tensor::zeros(&[3 * hidden]))?,
        })
    }

    /// `x·Wx + bx`, which can be computed once for inputs that repeat across steps.
    pub fn project_input(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let wx = tape.param(store, self.wx);
        let bx = tape.param(store, self.bx);
        let xw = tape.matmul(x, wx)?;
        tape.add_bias(xw, bx)
    }

    /// One step from a precomputed input projection.
    pub fn step_projected(&self, tape: &mut Tape, store: &ParamStore, xp: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let wh = tape.param(store, self.wh);
        let bh = tape.param(store, self.bh);
        let hw = tape.matmul(h, wh)?;
        let hp = tape.add_bias(hw, bh)?;
        let xzr = tape.slice(xp, 1, 0, 2 * hs)?;
        let hzr = tape.slice(hp, 1, 0, 2 * hs)?;
        let zr_pre = tape.add(xzr, hzr)?;
        let zr = tape.sigmoid(zr_pre);
        let z = tape.slice(zr, 1, 0, hs)?;
        let r = tape.slice(zr, 1, hs, hs)?;
        let xn = tape.slice(xp, 1, 2 * hs, hs)?;
        let hn = tape.slice(hp, 1, 2 * hs, hs)?;
        let rhn = tape.mul(r, hn)?;
        let n_pre = tape.add(xn, rhn)?;
        let n = tape.tanh(n_pre);
        // h' = n + z ⊙ (h − n)
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let xp = self.project_input(tape, store, x)?;
        self.step_projected(tape, store, xp, h)
    }
}

/// LSTM with fused gates in (input, forget, cell, output) order.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            input,
            hidden,
            wx: store.add(format!("{prefix}.wx"), Tensor::zeros(&[input, 4 * hidden]))?,
            wh: store.add(format!("{prefix}.wh"), Tensor::zeros(&[hidden, 4 * hidden]))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]))?,
        })
    }

    pub fn bias_id(&self) -> ParamId {
        self.b
    }

    /// One step; returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let wx = tape.param(store, self.wx);
        let wh = tape.param(store, self.wh);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, wx)?;
        let hw = tape.matmul(h, wh)?;
        let pre = tape.add(xw, hw)?;
        let pre = tape.add_bias(pre, b)?;
        let ifo_i = tape.slice(pre, 1, 0, 2 * hs)?;
        let if_gates = tape.sigmoid(ifo_i);
        let i = tape.slice(if_gates, 1, 0, hs)?;
        let f = tape.slice(if_gates, 1, hs, hs)?;
        let g_pre = tape.slice(pre, 1, 2 * hs, hs)?;
        let g = tape.tanh(g_pre);
        let o_pre = tape.slice(pre, 1, 3 * hs, hs)?;
        let o = tape.sigmoid(o_pre);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c2 = tape.add(fc, ig)?;
        let tc = tape.tanh(c2);
        let h2 = tape.mul(o, tc)?;
        Ok((h2, c2))
    }

    /// Run over a sequence from zero state; returns the final hidden state.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, inputs: &[Var], batch: usize) -> Result<Var> {
        let mut h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut c = h;
        for &x in inputs {
            (h, c) = self.step(tape, store, x, h, c)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gru_halves_hidden() {
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "g", 2, 3).unwrap();
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![0.7, -1.0]).unwrap());
        let mut h = t.constant(Tensor::matrix(1, 3, vec![1.0, -2.0, 4.0]).unwrap());
        for k in 1..=3 {
            h = cell.step(&mut t, &store, x, h).unwrap();
            let expect = [1.0, -2.0, 4.0].map(|v| v * 0.5f64.powi(k));
            for (a, b) in t.value(h).data().iter().zip(expect) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "l", 2, 2).unwrap();
        let b = store.get_mut(cell.bias_id());
        b.data_mut()[2..4].fill(20.0);
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![0.3, 0.3]).unwrap());
        let h = t.constant(Tensor::zeros(&[1, 2]));
        let c = t.constant(Tensor::matrix(1, 2, vec![1.5, -0.25]).unwrap());
        let (_, c2) = cell.step(&mut t, &store, x, h, c).unwrap();
        assert_abs_diff_eq!(t.value(c2).data()[0], 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(t.value(c2).data()[1], -0.25, epsilon = 1e-6);
    }
}
