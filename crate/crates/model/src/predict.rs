//! Inference (the latent mixture under the prior head) and test-set evaluation.

use serde::{Deserialize, Serialize};
use utraj_autodiff::Tape;
use utraj_core::linalg::{cholesky2, regularize2};
use utraj_core::metrics::{EvalReport, ForecastSample, MetricsConfig};
use utraj_core::{Gaussian2, Gmm2, Scene};

use crate::error::{Error, Result};
use crate::features::{extract_windows, window, Window};
use crate::network::{row_gaussian, Batch, Forecaster};

/// A forecast for one agent in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scene: usize,
    pub agent: usize,
    pub step: i64,
    /// Prior weights `p(z | x̂, Σ̂)`.
    pub weights: Vec<f64>,
    /// Position mixture per future step.
    pub steps: Vec<Gmm2>,
}

impl Prediction {
    /// Mode `k`'s Gaussian at future step `t` (0-based).
    pub fn mode(&self, t: usize, k: usize) -> &Gaussian2 {
        &self.steps[t].components()[k]
    }
}

/// Decode every window with all `K` modes and prior mixture weights.
pub fn predict_windows(model: &Forecaster, windows: &[&Window], batch_size: usize) -> Result<Vec<Prediction>> {
    let k = model.config.latent_size;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        let batch = Batch::new(chunk, &model.config)?;
        let mut tape = Tape::new();
        let ex = model.encode(&mut tape, &batch)?;
        let logits = model.prior_logits(&mut tape, ex)?;
        let probs = tape.softmax(logits);
        let dec = model.decode(&mut tape, ex, &batch)?;
        let probs = tape.value(probs);
        for (b, w) in chunk.iter().enumerate() {
            let weights: Vec<f64> = (0..k).map(|j| probs.at(b, j)).collect();
            let mut steps = Vec::with_capacity(model.config.horizon);
            for t in 0..model.config.horizon {
                let (m, c) = (tape.value(dec.pos_means[t]), tape.value(dec.pos_covs[t]));
                let comps: Vec<Gaussian2> = (0..k)
                    .map(|j| {
                        let g = row_gaussian(m, c, b * k + j, w.origin);
                        cholesky2(&regularize2(&g.cov))?;
                        Ok(g)
                    })
                    .collect::<Result<_>>()?;
                steps.push(Gmm2::new(weights.clone(), comps)?);
            }
            out.push(Prediction { scene: w.scene, agent: w.agent, step: w.step, weights: weights.clone(), steps });
        }
    }
    Ok(out)
}

/// Forecast `agent` of `scene` from `step`; `None` if no full window exists there.
pub fn predict(model: &Forecaster, scene: &Scene, agent: usize, step: i64) -> Result<Option<Prediction>> {
    let Some(w) = window(scene, 0, agent, step, &model.config)? else { return Ok(None) };
    Ok(predict_windows(model, &[&w], 1)?.pop())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// 1-based forecast steps reported (0.2/0.4/0.6/0.8 s at 10 Hz).
    pub report_steps: Vec<usize>,
    pub window_stride: usize,
    pub batch_size: usize,
    pub metrics: MetricsConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { report_steps: vec![2, 4, 6, 8], window_stride: 1, batch_size: 64, metrics: MetricsConfig::default() }
    }
}

impl EvalConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.report_steps.is_empty() || self.report_steps.iter().any(|&s| s == 0 || s > horizon) {
            return Err(Error::InvalidConfig(format!("report_steps must lie in 1..={horizon}")));
        }
        if self.window_stride == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("window_stride and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// All test-set predictions paired with their GT futures.
pub fn forecast_samples(model: &Forecaster, test: &[Scene], config: &EvalConfig) -> Result<Vec<ForecastSample>> {
    config.validate(model.config.horizon)?;
    let windows = extract_windows(test, &model.config, config.window_stride)?;
    if windows.is_empty() {
        return Err(Error::Core(utraj_core::Error::EmptyTestSet));
    }
    let refs: Vec<&Window> = windows.iter().collect();
    let preds = predict_windows(model, &refs, config.batch_size)?;
    Ok(preds
        .into_iter()
        .zip(&windows)
        .map(|(p, w)| ForecastSample { steps: p.steps, gt: w.targets.iter().map(|y| y + w.origin).collect() })
        .collect())
}

pub fn evaluate(model: &Forecaster, test: &[Scene], config: &EvalConfig) -> Result<EvalReport> {
    let samples = forecast_samples(model, test, config)?;
    let dt = test.first().map_or(model.dt, |s| s.dt);
    Ok(EvalReport::from_samples(&samples, dt, &config.report_steps, &config.metrics)?)
}

/// Mean over windows of the prior-weighted trace of the first-step position covariance.
pub fn mean_first_step_trace(model: &Forecaster, scenes: &[Scene], stride: usize, batch_size: usize) -> Result<f64> {
    let windows = extract_windows(scenes, &model.config, stride)?;
    if windows.is_empty() {
        return Err(Error::Core(utraj_core::Error::EmptyTestSet));
    }
    let refs: Vec<&Window> = windows.iter().collect();
    let preds = predict_windows(model, &refs, batch_size)?;
    let total: f64 = preds.iter().map(|p| p.steps[0].iter().map(|(w, g)| w * g.cov.trace()).sum::<f64>()).sum();
    Ok(total / preds.len() as f64)
}
