//! Differentiable dynamics integration of per-step control Gaussians.
//!
//! Each rollout mirrors `utraj_core::dynamics`: the mean follows `step_mean`
//! on the mean control and the covariance follows `A·P·Aᵀ + B·Σu·Bᵀ` with
//! Jacobians taken at the current mean.

use nalgebra::DMatrix;
use utraj_autodiff::{Tape, Tensor, Var};
use utraj_core::dynamics::{Bicycle, Dynamics, DynamicsKind, BICYCLE_WHEELBASE};

use crate::error::Result;

pub trait Rollout: Send + Sync {
    fn state_dim(&self) -> usize;

    /// Advance mean `s: [N, n]` and flattened covariance `p: [N, n²]` (`None`
    /// meaning zero) under control mean `u: [N, 2]` and covariance `su: [N, 4]`.
    fn step(&self, tape: &mut Tape, s: Var, p: Option<Var>, u: Var, su: Var) -> Result<(Var, Var)>;

    fn position_mean(&self, tape: &mut Tape, s: Var) -> Result<Var> {
        Ok(tape.slice(s, 1, 0, 2)?)
    }

    fn position_cov(&self, tape: &mut Tape, p: Var) -> Result<Var> {
        let n = self.state_dim();
        Ok(tape.gather_cols(p, &[0, 1, n, n + 1])?)
    }
}

pub fn rollout_for(kind: DynamicsKind, dt: f64) -> Result<Box<dyn Rollout>> {
    Ok(match kind {
        DynamicsKind::Bicycle => Box::new(BicycleRollout { model: Bicycle { dt, wheelbase: BICYCLE_WHEELBASE } }),
        linear => Box::new(LinearRollout::new(linear.build(dt)?.as_ref())?),
    })
}

fn transposed(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn(&[m.ncols(), m.nrows()], |i| m[(i % m.nrows(), i / m.nrows())])
}

/// Row-major `M ⊗ M` transposed, so that `vec(M·X·Mᵀ) = vec(X)·kron`.
fn kron_t(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = (m.nrows(), m.ncols());
    Tensor::from_fn(&[c * c, r * r], |i| {
        let (row, col) = (i / (r * r), i % (r * r));
        let (cc, dd) = (row / c, row % c);
        let (a, b) = (col / r, col % r);
        m[(a, cc)] * m[(b, dd)]
    })
}

/// Rollout of a time-invariant linear model.
pub struct LinearRollout {
    n: usize,
    a_t: Tensor,
    b_t: Tensor,
    a_kron: Tensor,
    b_kron: Tensor,
}

impl LinearRollout {
    pub fn new(model: &dyn Dynamics) -> Result<Self> {
        let n = model.state_dim();
        let (a, b) = model.jacobians(&nalgebra::DVector::zeros(n), &nalgebra::DVector::zeros(model.control_dim()))?;
        Ok(Self { n, a_t: transposed(&a), b_t: transposed(&b), a_kron: kron_t(&a), b_kron: kron_t(&b) })
    }
}

impl Rollout for LinearRollout {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn step(&self, tape: &mut Tape, s: Var, p: Option<Var>, u: Var, su: Var) -> Result<(Var, Var)> {
        let (at, bt) = (tape.constant(self.a_t.clone()), tape.constant(self.b_t.clone()));
        let sa = tape.matmul(s, at)?;
        let ub = tape.matmul(u, bt)?;
        let s2 = tape.add(sa, ub)?;
        let bk = tape.constant(self.b_kron.clone());
        let mut p2 = tape.matmul(su, bk)?;
        if let Some(p) = p {
            let ak = tape.constant(self.a_kron.clone());
            let pa = tape.matmul(p, ak)?;
            p2 = tape.add(pa, p2)?;
        }
        Ok((s2, p2))
    }
}

/// Kinematic bicycle, linearized around the predicted mean at every step.
pub struct BicycleRollout {
    model: Bicycle,
}

impl Rollout for BicycleRollout {
    fn state_dim(&self) -> usize {
        4
    }

    fn step(&self, tape: &mut Tape, s: Var, p: Option<Var>, u: Var, su: Var) -> Result<(Var, Var)> {
        let (dt, l) = (self.model.dt, self.model.wheelbase);
        let rows = tape.shape(s)[0];
        let col = |tape: &mut Tape, x: Var, i: usize| tape.slice(x, 1, i, 1);
        let (x, y, th, v) = (col(tape, s, 0)?, col(tape, s, 1)?, col(tape, s, 2)?, col(tape, s, 3)?);
        let (acc, steer) = (col(tape, u, 0)?, col(tape, u, 1)?);
        let (c, sn, tn) = (tape.cos(th), tape.sin(th), tape.tan(steer));
        let vc = tape.mul(v, c)?;
        let vs = tape.mul(v, sn)?;
        let vt = tape.mul(v, tn)?;

        let dx = tape.scale(vc, dt);
        let dy = tape.scale(vs, dt);
        let dth = tape.scale(vt, dt / l);
        let dv = tape.scale(acc, dt);
        let x2 = tape.add(x, dx)?;
        let y2 = tape.add(y, dy)?;
        let th2 = tape.add(th, dth)?;
        let v2 = tape.add(v, dv)?;
        let s2 = tape.concat(&[x2, y2, th2, v2], 1)?;

        let one = tape.constant(Tensor::full(&[rows, 1], 1.0));
        let zero = tape.constant(Tensor::zeros(&[rows, 1]));
        let a02 = tape.scale(vs, -dt);
        let a03 = tape.scale(c, dt);
        let a12 = tape.scale(vc, dt);
        let a13 = tape.scale(sn, dt);
        let a23 = tape.scale(tn, dt / l);
        #[rustfmt::skip]
        let a = tape.concat(&[
            one, zero, a02, a03,
            zero, one, a12, a13,
            zero, zero, one, a23,
            zero, zero, zero, one,
        ], 1)?;
        // ∂θ'/∂δ = dt·v·sec²δ / L
        let t2 = tape.mul(tn, tn)?;
        let sec2 = tape.affine(t2, 1.0, 1.0);
        let vsec = tape.mul(v, sec2)?;
        let b21 = tape.scale(vsec, dt / l);
        let b30 = tape.constant(Tensor::full(&[rows, 1], dt));
        let b = tape.concat(&[zero, zero, zero, zero, zero, b21, b30, zero], 1)?;

        let mut p2 = utraj_autodiff::nodes::congruence(tape, b, su, 4, 2)?;
        if let Some(p) = p {
            let ap = utraj_autodiff::nodes::congruence(tape, a, p, 4, 4)?;
            p2 = tape.add(ap, p2)?;
        }
        Ok((s2, p2))
    }
}
