//! Closed-form statistical distances between bivariate Gaussians.
//!
//! Each distance is a [`StatDistance`] strategy; [`DistanceRegistry`] resolves them by
//! name so that the training loss and the selection study can pick one at runtime.
//! Covariances are regularized by [`EPS_REG`](crate::linalg::EPS_REG) before inversion.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian2, Gmm2};
use crate::linalg::{inverse2, logdet2, regularize2, Mat2, Vec2};

/// Hellinger values above this are reported as saturated.
pub const HELLINGER_SATURATION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Bhattacharyya,
    SymmetricKl,
    Hellinger,
}

impl DistanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::Bhattacharyya => "bhattacharyya",
            DistanceKind::SymmetricKl => "skl",
            DistanceKind::Hellinger => "hellinger",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bhattacharyya" | "bh" => Ok(DistanceKind::Bhattacharyya),
            "skl" | "symmetric_kl" => Ok(DistanceKind::SymmetricKl),
            "hellinger" | "he" => Ok(DistanceKind::Hellinger),
            _ => Err(Error::UnknownName { kind: "distance", name: s.to_string() }),
        }
    }
}

/// Gradient of a distance with respect to the first argument's parameters.
///
/// `cov` is the matrix gradient `G` with `dD = Σᵢⱼ Gᵢⱼ dΣᵢⱼ` (entries treated as
/// independent, `G` symmetric). A symmetric perturbation of the off-diagonal entry
/// therefore changes the distance at rate `2·G₀₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGrad {
    pub mean: Vec2,
    pub cov: Mat2,
}

pub trait StatDistance: Send + Sync {
    fn kind(&self) -> DistanceKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn distance(&self, p: &Gaussian2, q: &Gaussian2) -> Result<f64>;

    /// Analytic gradient with respect to `p`'s mean and covariance.
    fn grad(&self, p: &Gaussian2, q: &Gaussian2) -> Result<GaussianGrad>;
}

/// Quantities shared by the Bhattacharyya distance and its gradient.
struct BhTerms {
    delta: Vec2,
    avg_inv: Mat2,
    p_inv: Mat2,
    value: f64,
}

fn bh_terms(p: &Gaussian2, q: &Gaussian2) -> Result<BhTerms> {
    let sp = regularize2(&p.cov);
    let sq = regularize2(&q.cov);
    let avg = (sp + sq) * 0.5;
    let (avg_inv, _) = inverse2(&avg)?;
    let (p_inv, _) = inverse2(&sp)?;
    let delta = p.mean - q.mean;
    let quad = delta.dot(&(avg_inv * delta));
    let value = 0.125 * quad + 0.5 * logdet2(&avg)? - 0.25 * logdet2(&sp)? - 0.25 * logdet2(&sq)?;
    // Rounding can leave a tiny negative residue for identical inputs.
    Ok(BhTerms { delta, avg_inv, p_inv, value: value.max(0.0) })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bhattacharyya;

impl StatDistance for Bhattacharyya {
    fn kind(&self) -> DistanceKind {
        DistanceKind::Bhattacharyya
    }

    fn distance(&self, p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
        Ok(bh_terms(p, q)?.value)
    }

    fn grad(&self, p: &Gaussian2, q: &Gaussian2) -> Result<GaussianGrad> {
        let t = bh_terms(p, q)?;
        let a = t.avg_inv * t.delta;
        Ok(GaussianGrad {
            mean: a * 0.25,
            cov: -(a * a.transpose()) / 16.0 + t.avg_inv * 0.25 - t.p_inv * 0.25,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SymmetricKl;

/// KL(p‖q) between regularized Gaussians.
fn kl(p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
    let sp = regularize2(&p.cov);
    let sq = regularize2(&q.cov);
    let (q_inv, _) = inverse2(&sq)?;
    let d = q.mean - p.mean;
    Ok(0.5 * ((q_inv * sp).trace() + d.dot(&(q_inv * d)) - 2.0 + logdet2(&sq)? - logdet2(&sp)?))
}

impl StatDistance for SymmetricKl {
    fn kind(&self) -> DistanceKind {
        DistanceKind::SymmetricKl
    }

    fn distance(&self, p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
        Ok((0.5 * (kl(p, q)? + kl(q, p)?)).max(0.0))
    }

    fn grad(&self, p: &Gaussian2, q: &Gaussian2) -> Result<GaussianGrad> {
        let sp = regularize2(&p.cov);
        let sq = regularize2(&q.cov);
        let (p_inv, _) = inverse2(&sp)?;
        let (q_inv, _) = inverse2(&sq)?;
        let delta = p.mean - q.mean;
        let a = p_inv * delta;
        let g_pq = (q_inv - p_inv) * 0.5;
        let g_qp = (-(p_inv * sq * p_inv) - a * a.transpose() + p_inv) * 0.5;
        Ok(GaussianGrad { mean: (q_inv + p_inv) * delta * 0.5, cov: (g_pq + g_qp) * 0.5 })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Hellinger;

impl StatDistance for Hellinger {
    fn kind(&self) -> DistanceKind {
        DistanceKind::Hellinger
    }

    fn distance(&self, p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
        let db = bh_terms(p, q)?.value;
        Ok((1.0 - (-db).exp()).max(0.0).sqrt())
    }

    fn grad(&self, p: &Gaussian2, q: &Gaussian2) -> Result<GaussianGrad> {
        let db = bh_terms(p, q)?.value;
        let h = (1.0 - (-db).exp()).max(0.0).sqrt();
        if h == 0.0 {
            // p == q is a minimum; the derivative of the square root is undefined there.
            return Ok(GaussianGrad { mean: Vec2::zeros(), cov: Mat2::zeros() });
        }
        let g = Bhattacharyya.grad(p, q)?;
        let scale = (-db).exp() / (2.0 * h);
        Ok(GaussianGrad { mean: g.mean * scale, cov: g.cov * scale })
    }
}

/// Named lookup of distance strategies.
#[derive(Clone)]
pub struct DistanceRegistry {
    entries: BTreeMap<&'static str, Arc<dyn StatDistance>>,
}

impl DistanceRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Bhattacharyya));
        r.register(Arc::new(SymmetricKl));
        r.register(Arc::new(Hellinger));
        r
    }

    pub fn register(&mut self, d: Arc<dyn StatDistance>) {
        self.entries.insert(d.name(), d);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn StatDistance>> {
        let key = name.parse::<DistanceKind>().map(|k| k.name()).unwrap_or(name);
        self.entries
            .get(key)
            .cloned()
            .ok_or_else(|| Error::UnknownName { kind: "distance", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

impl Default for DistanceRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

pub fn distance_for(kind: DistanceKind) -> &'static dyn StatDistance {
    match kind {
        DistanceKind::Bhattacharyya => &Bhattacharyya,
        DistanceKind::SymmetricKl => &SymmetricKl,
        DistanceKind::Hellinger => &Hellinger,
    }
}

pub fn bhattacharyya(p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
    Bhattacharyya.distance(p, q)
}

pub fn hellinger(p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
    Hellinger.distance(p, q)
}

pub fn symmetric_kl(p: &Gaussian2, q: &Gaussian2) -> Result<f64> {
    SymmetricKl.distance(p, q)
}

pub fn distance_grad(kind: DistanceKind, p: &Gaussian2, q: &Gaussian2) -> Result<GaussianGrad> {
    distance_for(kind).grad(p, q)
}

/// Weight-averaged component distance `Σ_k π_k d(N(μ_k, Σ_k), q)`.
pub fn gmm_distance(d: &dyn StatDistance, p: &Gmm2, q: &Gaussian2) -> Result<f64> {
    p.iter().try_fold(0.0, |acc, (w, c)| Ok(acc + w * d.distance(c, q)?))
}

/// Mixture-to-Gaussian Bhattacharyya distance.
pub fn bhattacharyya_gmm(p: &Gmm2, q: &Gaussian2) -> Result<f64> {
    gmm_distance(&Bhattacharyya, p, q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrad {
    /// ∂/∂π_k, equal to the k-th component distance.
    pub weights: Vec<f64>,
    pub components: Vec<GaussianGrad>,
}

pub fn gmm_distance_grad(d: &dyn StatDistance, p: &Gmm2, q: &Gaussian2) -> Result<MixtureGrad> {
    let mut weights = Vec::with_capacity(p.len());
    let mut components = Vec::with_capacity(p.len());
    for (w, c) in p.iter() {
        weights.push(d.distance(c, q)?);
        let g = d.grad(c, q)?;
        components.push(GaussianGrad { mean: g.mean * w, cov: g.cov * w });
    }
    Ok(MixtureGrad { weights, components })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyGrid {
    /// Mean offsets along x (m).
    pub offsets: Vec<f64>,
    /// Ratio of the second covariance to the identity.
    pub scales: Vec<f64>,
}

impl Default for StudyGrid {
    fn default() -> Self {
        Self { offsets: vec![0.0, 0.5, 1.0, 2.0, 5.0, 20.0], scales: vec![0.25, 1.0, 4.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub offset: f64,
    pub scale: f64,
    pub bhattacharyya: f64,
    pub skl: f64,
    pub hellinger: f64,
    pub hellinger_saturated: bool,
}

/// Distances between `N(0, I)` and `N((offset, 0), scale·I)` over the grid, offsets outermost.
pub fn distance_study(grid: &StudyGrid) -> Result<Vec<StudyRow>> {
    let p = Gaussian2::standard();
    let mut rows = Vec::with_capacity(grid.offsets.len() * grid.scales.len());
    for &offset in &grid.offsets {
        for &scale in &grid.scales {
            let q = Gaussian2::isotropic(Vec2::new(offset, 0.0), scale)?;
            let hellinger = hellinger(&p, &q)?;
            rows.push(StudyRow {
                offset,
                scale,
                bhattacharyya: bhattacharyya(&p, &q)?,
                skl: symmetric_kl(&p, &q)?,
                hellinger,
                hellinger_saturated: hellinger > HELLINGER_SATURATION,
            });
        }
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["offset", "scale", "bhattacharyya", "skl", "hellinger", "hellinger_saturated"])?;
    for r in rows {
        w.write_record([
            r.offset.to_string(),
            r.scale.to_string(),
            r.bhattacharyya.to_string(),
            r.skl.to_string(),
            r.hellinger.to_string(),
            r.hellinger_saturated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
