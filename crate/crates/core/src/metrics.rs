//! Forecast evaluation: negative log likelihood, final displacement error and
//! the empirical sigma value calibration gap.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{gmm_logpdf, Gaussian2, Gmm2};
use crate::linalg::{cholesky2, symmetrize2, Vec2};

/// Fraction of a bivariate Gaussian's mass inside its 1σ, 2σ and 3σ ellipses.
pub const SIGMA_IDEAL: [f64; 3] = [0.39, 0.86, 0.99];

/// How a mixture is reduced to a point for displacement errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdeMode {
    #[default]
    MixtureMean,
    TopMode,
}

/// Which Gaussian(s) define the i-σ level set of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsvMode {
    /// Highest-weight mode only.
    #[default]
    TopMode,
    /// Covered if inside the level set of any mode with positive weight.
    AnyMode,
}

impl FromStr for FdeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture_mean" => Ok(FdeMode::MixtureMean),
            "top_mode" => Ok(FdeMode::TopMode),
            _ => Err(Error::UnknownName { kind: "fde mode", name: s.into() }),
        }
    }
}

impl FromStr for EsvMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_mode" => Ok(EsvMode::TopMode),
            "any_mode" => Ok(EsvMode::AnyMode),
            _ => Err(Error::UnknownName { kind: "esv mode", name: s.into() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub fde_mode: FdeMode,
    pub esv_mode: EsvMode,
}

/// One agent's forecast: a mixture per future step and the GT positions.
#[derive(Debug, Clone)]
pub struct ForecastSample {
    pub steps: Vec<Gmm2>,
    pub gt: Vec<Vec2>,
}

impl ForecastSample {
    fn check(&self) -> Result<()> {
        if self.steps.len() != self.gt.len() {
            return Err(Error::HorizonMismatch { predicted: self.steps.len(), truth: self.gt.len() });
        }
        Ok(())
    }
}

fn horizon_of(samples: &[ForecastSample]) -> Result<usize> {
    let first = samples.first().ok_or(Error::EmptyTestSet)?;
    for s in samples {
        s.check()?;
        if s.steps.len() != first.steps.len() {
            return Err(Error::HorizonMismatch { predicted: s.steps.len(), truth: first.steps.len() });
        }
    }
    Ok(first.steps.len())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-horizon mean and (population) standard deviation of −log p(gt) across samples.
pub fn nll(samples: &[ForecastSample]) -> Result<Vec<(f64, f64)>> {
    let t = horizon_of(samples)?;
    (0..t)
        .map(|k| {
            let v = samples.iter().map(|s| gmm_logpdf(&s.steps[k], &s.gt[k]).map(|l| -l)).collect::<Result<Vec<_>>>()?;
            Ok(mean_std(&v))
        })
        .collect()
}

fn point_estimate(g: &Gmm2, mode: FdeMode) -> Vec2 {
    match mode {
        FdeMode::MixtureMean => g.mean(),
        FdeMode::TopMode => g.components()[g.top_mode()].mean,
    }
}

/// Mean displacement between the point estimate and GT at every horizon step.
pub fn displacement(samples: &[ForecastSample], mode: FdeMode) -> Result<Vec<f64>> {
    let t = horizon_of(samples)?;
    Ok((0..t)
        .map(|k| samples.iter().map(|s| (point_estimate(&s.steps[k], mode) - s.gt[k]).norm()).sum::<f64>() / samples.len() as f64)
        .collect())
}

/// Final displacement error at the last horizon step.
pub fn fde(samples: &[ForecastSample], mode: FdeMode) -> Result<f64> {
    let d = displacement(samples, mode)?;
    d.last().copied().ok_or(Error::HorizonMismatch { predicted: 0, truth: 1 })
}

/// Squared Mahalanobis distance under the predicted covariance itself.
///
/// Level sets describe the prediction, so the density floor is not added
/// here unless the covariance is numerically singular.
fn level_mahalanobis2(g: &Gaussian2, x: &Vec2) -> Result<f64> {
    let Ok(l) = cholesky2(&symmetrize2(&g.cov)) else { return g.mahalanobis2(x) };
    let d = x - g.mean;
    let z0 = d.x / l[(0, 0)];
    let z1 = (d.y - l[(1, 0)] * z0) / l[(1, 1)];
    Ok(z0 * z0 + z1 * z1)
}

fn within(g: &Gmm2, x: &Vec2, level: f64, mode: EsvMode) -> Result<bool> {
    let r2 = level * level;
    match mode {
        EsvMode::TopMode => Ok(level_mahalanobis2(&g.components()[g.top_mode()], x)? <= r2),
        EsvMode::AnyMode => {
            for (w, c) in g.iter() {
                if w > 0.0 && level_mahalanobis2(c, x)? <= r2 {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

/// Empirical fraction of GT points inside the `level`-σ set, per horizon step.
pub fn sigma_fraction(samples: &[ForecastSample], level: usize, mode: EsvMode) -> Result<Vec<f64>> {
    let t = horizon_of(samples)?;
    (0..t)
        .map(|k| {
            let mut hits = 0usize;
            for s in samples {
                if within(&s.steps[k], &s.gt[k], level as f64, mode)? {
                    hits += 1;
                }
            }
            Ok(hits as f64 / samples.len() as f64)
        })
        .collect()
}

/// ΔESVᵢ per horizon step; negative means overconfident, positive underconfident.
pub fn delta_esv(samples: &[ForecastSample], i: usize, mode: EsvMode) -> Result<Vec<f64>> {
    if !(1..=3).contains(&i) {
        return Err(Error::InvalidConfig(format!("sigma level must be 1, 2 or 3, got {i}")));
    }
    Ok(sigma_fraction(samples, i, mode)?.into_iter().map(|f| f - SIGMA_IDEAL[i - 1]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon_s: f64,
    pub nll_mean: f64,
    pub nll_std: f64,
    pub fde: f64,
    pub desv1: f64,
    pub desv2: f64,
    pub desv3: f64,
    pub n: usize,
}

impl HorizonRow {
    pub fn desv(&self, i: usize) -> f64 {
        [self.desv1, self.desv2, self.desv3][i - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<HorizonRow>,
}

impl EvalReport {
    /// Aggregate samples at the given 1-based horizon steps.
    pub fn from_samples(samples: &[ForecastSample], dt: f64, report_steps: &[usize], config: &MetricsConfig) -> Result<Self> {
        let t = horizon_of(samples)?;
        if let Some(&bad) = report_steps.iter().find(|&&k| k == 0 || k > t) {
            return Err(Error::HorizonMismatch { predicted: t, truth: bad });
        }
        let nll = nll(samples)?;
        let disp = displacement(samples, config.fde_mode)?;
        let desv = (1..=3).map(|i| delta_esv(samples, i, config.esv_mode)).collect::<Result<Vec<_>>>()?;
        let rows = report_steps
            .iter()
            .map(|&k| HorizonRow {
                horizon_s: round_horizon(k as f64 * dt),
                nll_mean: nll[k - 1].0,
                nll_std: nll[k - 1].1,
                fde: disp[k - 1],
                desv1: desv[0][k - 1],
                desv2: desv[1][k - 1],
                desv3: desv[2][k - 1],
                n: samples.len(),
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn horizons(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.horizon_s).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<HorizonRow>, _>>()?;
        Ok(Self { rows })
    }
}

// Keeps 0.1·3 printing as 0.3 rather than 0.30000000000000004.
fn round_horizon(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Gaussian2;
    use crate::linalg::Mat2;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn level_sets_ignore_the_density_floor() {
        // Variance 1e-8 with a 5e-4 offset: 5σ away, although the 1e-6 floor
        // would put the point inside 1σ.
        let g = single(Vec2::zeros(), 1e-8);
        let s = ForecastSample { steps: vec![g], gt: vec![Vec2::new(5e-4, 0.0)] };
        let f = sigma_fraction(&[s], 3, EsvMode::TopMode).unwrap();
        assert_eq!(f, vec![0.0]);
    }

    fn single(mean: Vec2, var: f64) -> Gmm2 {
        Gmm2::single(Gaussian2::isotropic(mean, var).unwrap())
    }

    fn sample_at(g: Vec2, var: f64) -> ForecastSample {
        ForecastSample { steps: vec![single(g, var)], gt: vec![g] }
    }

    #[test]
    fn nll_examples() {
        let s = [sample_at(Vec2::new(1.0, 2.0), 1.0), sample_at(Vec2::new(-3.0, 0.5), 1.0)];
        let r = nll(&s).unwrap();
        assert_abs_diff_eq!(r[0].0, 1.8379, epsilon = 1e-4);
        assert_abs_diff_eq!(r[0].1, 0.0, epsilon = 1e-12);
        let tight = nll(&[sample_at(Vec2::zeros(), 0.01)]).unwrap();
        // The density floor adds 1e-6 m² to each variance, shifting the value by ~1e-4.
        assert_abs_diff_eq!(tight[0].0, (2.0 * std::f64::consts::PI * (0.01 + 1e-6)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(tight[0].0, -2.7673, epsilon = 2e-4);
    }

    #[test]
    fn horizon_mismatch() {
        let s = ForecastSample { steps: vec![single(Vec2::zeros(), 1.0)], gt: vec![] };
        assert!(matches!(nll(&[s.clone()]), Err(Error::HorizonMismatch { .. })));
        assert!(matches!(fde(&[s], FdeMode::MixtureMean), Err(Error::HorizonMismatch { .. })));
        assert!(matches!(nll(&[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn fde_examples() {
        assert_eq!(fde(&[sample_at(Vec2::new(2.0, 1.0), 1.0)], FdeMode::MixtureMean).unwrap(), 0.0);
        let off = ForecastSample { steps: vec![single(Vec2::new(3.0, 4.0), 1.0)], gt: vec![Vec2::zeros()] };
        assert_abs_diff_eq!(fde(&[off], FdeMode::MixtureMean).unwrap(), 5.0, epsilon = 1e-12);
        let c = |x: f64| Gaussian2::isotropic(Vec2::new(x, 0.0), 1.0).unwrap();
        let two = Gmm2::new(vec![0.5, 0.5], vec![c(0.0), c(2.0)]).unwrap();
        let s = ForecastSample { steps: vec![two], gt: vec![Vec2::new(1.0, 0.0)] };
        assert_abs_diff_eq!(fde(&[s.clone()], FdeMode::MixtureMean).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fde(&[s], FdeMode::TopMode).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn esv_at_mean_is_maximal() {
        let s = vec![sample_at(Vec2::new(1.0, 1.0), 1.0); 4];
        let d: Vec<f64> = (1..=3).map(|i| delta_esv(&s, i, EsvMode::TopMode).unwrap()[0]).collect();
        assert_abs_diff_eq!(d[0], 0.61, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.14, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn esv_calibrated_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Gaussian2::new(Vec2::new(0.5, -1.0), Mat2::new(2.0, 0.6, 0.6, 0.8)).unwrap();
        let samples: Vec<ForecastSample> = (0..20_000)
            .map(|_| {
                let z = Vec2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                ForecastSample { steps: vec![Gmm2::single(g.clone())], gt: vec![g.transform_standard(z).unwrap()] }
            })
            .collect();
        for i in 1..=3 {
            assert!(delta_esv(&samples, i, EsvMode::TopMode).unwrap()[0].abs() < 0.02);
        }
    }

    #[test]
    fn report_rows() {
        let s: Vec<ForecastSample> = (0..3)
            .map(|i| {
                let g = Vec2::new(i as f64, 0.0);
                ForecastSample { steps: (0..8).map(|_| single(g, 1.0)).collect(), gt: vec![g; 8] }
            })
            .collect();
        let r = EvalReport::from_samples(&s, 0.1, &[2, 4, 6, 8], &MetricsConfig::default()).unwrap();
        assert_eq!(r.horizons(), vec![0.2, 0.4, 0.6, 0.8]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("horizon_s,nll_mean,nll_std,fde,desv1,desv2,desv3,n\n0.2,"));
        assert_eq!(EvalReport::read_csv(text.as_bytes()).unwrap(), r);
        assert!(EvalReport::from_samples(&s, 0.1, &[9], &MetricsConfig::default()).is_err());
    }
}
