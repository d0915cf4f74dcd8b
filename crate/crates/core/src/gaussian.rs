//! Bivariate Gaussians, Gaussian mixtures and their log-densities.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{cholesky2, logdet2, regularize2, symmetrize2, Mat2, Vec2};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on mixture weights summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: Vec2,
    pub cov: Mat2,
}

impl Gaussian2 {
    /// Symmetrizes `cov` and checks it is positive definite.
    pub fn new(mean: Vec2, cov: Mat2) -> Result<Self> {
        let cov = symmetrize2(&cov);
        cholesky2(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: Vec2, var: f64) -> Result<Self> {
        Self::new(mean, Mat2::identity() * var)
    }

    pub fn standard() -> Self {
        Self { mean: Vec2::zeros(), cov: Mat2::identity() }
    }

    /// Squared Mahalanobis distance of `x` under the regularized covariance.
    pub fn mahalanobis2(&self, x: &Vec2) -> Result<f64> {
        let l = cholesky2(&regularize2(&self.cov))?;
        let d = x - self.mean;
        // Forward substitution with the lower factor.
        let z0 = d.x / l[(0, 0)];
        let z1 = (d.y - l[(1, 0)] * z0) / l[(1, 1)];
        Ok(z0 * z0 + z1 * z1)
    }

    /// Draw a sample through the Cholesky factor given two standard normals.
    pub fn transform_standard(&self, z: Vec2) -> Result<Vec2> {
        let l = cholesky2(&self.cov)?;
        Ok(self.mean + l * z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm2 {
    weights: Vec<f64>,
    components: Vec<Gaussian2>,
}

impl Gmm2 {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian2>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch { expected: weights.len(), got: components.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidWeights("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { weights, components })
    }

    pub fn single(component: Gaussian2) -> Self {
        Self { weights: vec![1.0], components: vec![component] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian2] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Gaussian2)> {
        self.weights.iter().copied().zip(self.components.iter())
    }

    /// Σ_k π_k μ_k
    pub fn mean(&self) -> Vec2 {
        self.iter().fold(Vec2::zeros(), |acc, (w, c)| acc + c.mean * w)
    }

    /// Index of the highest-weight component (first on ties).
    pub fn top_mode(&self) -> usize {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        best
    }

    /// Drop components whose weight is below `min_weight` and renormalize.
    pub fn truncated(&self, min_weight: f64) -> Result<Self> {
        let (w, c): (Vec<f64>, Vec<Gaussian2>) =
            self.iter().filter(|(w, _)| *w >= min_weight).map(|(w, c)| (w, *c)).unzip();
        let total: f64 = w.iter().sum();
        Self::new(w.into_iter().map(|x| x / total).collect(), c)
    }
}

/// Bivariate normal log-density; the covariance is regularized by `EPS_REG` first.
pub fn gaussian_logpdf(g: &Gaussian2, x: &Vec2) -> Result<f64> {
    let cov = regularize2(&g.cov);
    let half_logdet = 0.5 * logdet2(&cov)?;
    let m2 = g.mahalanobis2(x)?;
    Ok(-LN_2PI - half_logdet - 0.5 * m2)
}

/// Mixture log-density with a max-shift log-sum-exp.
pub fn gmm_logpdf(g: &Gmm2, x: &Vec2) -> Result<f64> {
    let mut terms = Vec::with_capacity(g.len());
    for (w, c) in g.iter() {
        if w > 0.0 {
            terms.push(w.ln() + gaussian_logpdf(c, x)?);
        }
    }
    Ok(log_sum_exp(&terms))
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(2π)`, exposed for callers composing their own densities.
pub fn ln_2pi() -> f64 {
    debug_assert!((LN_2PI - (2.0 * PI).ln()).abs() < 1e-15);
    LN_2PI
}
