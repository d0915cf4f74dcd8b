//! Fused differentiable nodes for bivariate Gaussians.
//!
//! Covariances travel through the tape as `[N, 4]` row-major flattened 2×2
//! matrices. Densities and distances symmetrize and regularize them exactly
//! like the closed forms in `utraj_core`, so forward values agree bit-for-bit
//! in structure and backward passes reuse the analytic gradients.

use utraj_core::gaussian::ln_2pi;
use utraj_core::linalg::{inverse2, logdet2, regularize2, symmetrize2, Mat2, Vec2};
use utraj_core::statdist::{Bhattacharyya, StatDistance};
use utraj_core::Gaussian2;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn expect_cols(tape: &Tape, v: Var, cols: usize, op: &'static str) -> Result<usize> {
    let t = tape.value(v);
    if t.shape().len() != 2 || t.cols() != cols {
        return Err(Error::ShapeMismatch { op, lhs: t.shape().to_vec(), rhs: vec![t.rows(), cols] });
    }
    Ok(t.rows())
}

fn same_rows(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch { op, lhs: vec![a], rhs: vec![b] });
    }
    Ok(())
}

fn row_cov(t: &Tensor, r: usize) -> Mat2 {
    let d = &t.data()[4 * r..4 * r + 4];
    symmetrize2(&Mat2::new(d[0], d[1], d[2], d[3]))
}

fn row_vec(t: &Tensor, r: usize) -> Vec2 {
    Vec2::new(t.data()[2 * r], t.data()[2 * r + 1])
}

/// Map unconstrained `(log σx, log σy, ρ_raw)` rows to flattened covariances
/// with ρ = tanh(ρ_raw); positive definite by construction.
pub fn cov_from_params(tape: &mut Tape, params: Var) -> Result<Var> {
    let n = expect_cols(tape, params, 3, "cov_from_params")?;
    let p = tape.value(params);
    let mut out = Vec::with_capacity(4 * n);
    let mut jac = Vec::with_capacity(12 * n);
    for r in 0..n {
        let (lx, ly, raw) = (p.data()[3 * r], p.data()[3 * r + 1], p.data()[3 * r + 2]);
        let (sx, sy, rho) = (lx.exp(), ly.exp(), raw.tanh());
        let (a, c) = (sx * sx, sy * sy);
        let b = rho * sx * sy;
        out.extend_from_slice(&[a, b, b, c]);
        let db_draw = (1.0 - rho * rho) * sx * sy;
        jac.extend_from_slice(&[2.0 * a, 0.0, 0.0, b, b, db_draw, b, b, db_draw, 0.0, 2.0 * c, 0.0]);
    }
    let value = Tensor::matrix(n, 4, out)?;
    let jac = Tensor::matrix(n, 12, jac)?;
    Ok(tape.row_local(value, vec![params], vec![jac]))
}

/// Per-row negative log density `−ln N(target; mean, cov)` as an `[N, 1]` column.
pub fn gaussian2_nll_cov(tape: &mut Tape, mean: Var, cov: Var, target: &[Vec2]) -> Result<Var> {
    let n = expect_cols(tape, mean, 2, "gaussian2_nll")?;
    same_rows("gaussian2_nll", n, expect_cols(tape, cov, 4, "gaussian2_nll")?)?;
    same_rows("gaussian2_nll", n, target.len())?;
    let (m, c) = (tape.value(mean), tape.value(cov));
    let mut out = Vec::with_capacity(n);
    let mut jm = Vec::with_capacity(2 * n);
    let mut jc = Vec::with_capacity(4 * n);
    for r in 0..n {
        let s = regularize2(&row_cov(c, r));
        let (inv, _) = inverse2(&s)?;
        let d = row_vec(m, r) - target[r];
        let a = inv * d;
        out.push(ln_2pi() + 0.5 * logdet2(&s)? + 0.5 * d.dot(&a));
        jm.extend_from_slice(&[a.x, a.y]);
        let g = (inv - a * a.transpose()) * 0.5;
        jc.extend_from_slice(&[g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]]);
    }
    let value = Tensor::matrix(n, 1, out)?;
    Ok(tape.row_local(value, vec![mean, cov], vec![Tensor::matrix(n, 2, jm)?, Tensor::matrix(n, 4, jc)?]))
}

/// Negative log density with the covariance given as `(log σx, log σy, ρ_raw)` rows.
pub fn gaussian2_nll_node(tape: &mut Tape, mean: Var, cov_params: Var, target: &[Vec2]) -> Result<Var> {
    let cov = cov_from_params(tape, cov_params)?;
    gaussian2_nll_cov(tape, mean, cov, target)
}

/// Per-row Bhattacharyya distance to constant target Gaussians, `[N, 1]`.
pub fn bhattacharyya_cov(tape: &mut Tape, mean: Var, cov: Var, targets: &[Gaussian2]) -> Result<Var> {
    let n = expect_cols(tape, mean, 2, "bhattacharyya")?;
    same_rows("bhattacharyya", n, expect_cols(tape, cov, 4, "bhattacharyya")?)?;
    same_rows("bhattacharyya", n, targets.len())?;
    let (m, c) = (tape.value(mean), tape.value(cov));
    let mut out = Vec::with_capacity(n);
    let mut jm = Vec::with_capacity(2 * n);
    let mut jc = Vec::with_capacity(4 * n);
    for (r, q) in targets.iter().enumerate() {
        let p = Gaussian2 { mean: row_vec(m, r), cov: row_cov(c, r) };
        out.push(Bhattacharyya.distance(&p, q)?);
        let g = Bhattacharyya.grad(&p, q)?;
        jm.extend_from_slice(&[g.mean.x, g.mean.y]);
        jc.extend_from_slice(&[g.cov[(0, 0)], g.cov[(0, 1)], g.cov[(1, 0)], g.cov[(1, 1)]]);
    }
    let value = Tensor::matrix(n, 1, out)?;
    Ok(tape.row_local(value, vec![mean, cov], vec![Tensor::matrix(n, 2, jm)?, Tensor::matrix(n, 4, jc)?]))
}

/// Bhattacharyya distance with a `(log σx, log σy, ρ_raw)` covariance parameterization.
pub fn bhattacharyya_node(tape: &mut Tape, mean: Var, cov_params: Var, targets: &[Gaussian2]) -> Result<Var> {
    let cov = cov_from_params(tape, cov_params)?;
    bhattacharyya_cov(tape, mean, cov, targets)
}

/// Row-wise congruence `J·P·Jᵀ` with `J` flattened `m×n` and `P` flattened `n×n`.
pub fn congruence(tape: &mut Tape, j: Var, p: Var, m: usize, n: usize) -> Result<Var> {
    let rows = expect_cols(tape, j, m * n, "congruence")?;
    same_rows("congruence", rows, expect_cols(tape, p, n * n, "congruence")?)?;
    let (tj, tp) = (tape.value(j), tape.value(p));
    let mm = m * m;
    let mut out = Vec::with_capacity(rows * mm);
    let mut jac_j = vec![0.0; rows * mm * m * n];
    let mut jac_p = vec![0.0; rows * mm * n * n];
    let mut jp = vec![0.0; m * n];
    let mut pjt = vec![0.0; n * m];
    for r in 0..rows {
        let jr = &tj.data()[r * m * n..(r + 1) * m * n];
        let pr = &tp.data()[r * n * n..(r + 1) * n * n];
        for a in 0..m {
            for f in 0..n {
                jp[a * n + f] = (0..n).map(|c| jr[a * n + c] * pr[c * n + f]).sum();
            }
        }
        for f in 0..n {
            for b in 0..m {
                pjt[f * m + b] = (0..n).map(|d| pr[f * n + d] * jr[b * n + d]).sum();
            }
        }
        for a in 0..m {
            for b in 0..m {
                out.push((0..n).map(|f| jp[a * n + f] * jr[b * n + f]).sum());
            }
        }
        let jjr = &mut jac_j[r * mm * m * n..(r + 1) * mm * m * n];
        let jpr = &mut jac_p[r * mm * n * n..(r + 1) * mm * n * n];
        for a in 0..m {
            for b in 0..m {
                let o = a * m + b;
                for f in 0..n {
                    jjr[o * m * n + a * n + f] += pjt[f * m + b];
                    jjr[o * m * n + b * n + f] += jp[a * n + f];
                }
                for c in 0..n {
                    for d in 0..n {
                        jpr[o * n * n + c * n + d] = jr[a * n + c] * jr[b * n + d];
                    }
                }
            }
        }
    }
    let value = Tensor::matrix(rows, mm, out)?;
    let jacs = vec![Tensor::matrix(rows, mm * m * n, jac_j)?, Tensor::matrix(rows, mm * n * n, jac_p)?];
    Ok(tape.row_local(value, vec![j, p], jacs))
}
