//! Training objective: exact expectation over the latent classes of the
//! per-step likelihood and Bhattacharyya terms, plus KL and mutual information.

use std::collections::BTreeMap;
use std::sync::Arc;

use utraj_autodiff::nodes::{bhattacharyya_cov, gaussian2_nll_cov};
use utraj_autodiff::{Tape, Var};

use crate::config::{LossMode, ModelConfig};
use crate::error::{Error, Result};
use crate::network::{Batch, Forecaster};

/// A loss configuration: how the likelihood and distance terms are weighted.
pub trait LossStrategy: Send + Sync {
    fn mode(&self) -> LossMode;

    /// `(w_nll, w_sd)` given the configured distance weight.
    fn weights(&self, lambda_sd: f64) -> (f64, f64);
}

struct NllOnlyLoss;
struct SdOnlyLoss;
struct CompositeLoss;

impl LossStrategy for NllOnlyLoss {
    fn mode(&self) -> LossMode {
        LossMode::NllOnly
    }

    fn weights(&self, _: f64) -> (f64, f64) {
        (1.0, 0.0)
    }
}

impl LossStrategy for SdOnlyLoss {
    fn mode(&self) -> LossMode {
        LossMode::SdOnly
    }

    fn weights(&self, lambda_sd: f64) -> (f64, f64) {
        (0.0, lambda_sd)
    }
}

impl LossStrategy for CompositeLoss {
    fn mode(&self) -> LossMode {
        LossMode::Composite
    }

    fn weights(&self, lambda_sd: f64) -> (f64, f64) {
        (1.0, lambda_sd)
    }
}

pub struct LossRegistry {
    entries: BTreeMap<&'static str, Arc<dyn LossStrategy>>,
}

impl LossRegistry {
    pub fn with_builtins() -> Self {
        let mut r = Self { entries: BTreeMap::new() };
        r.register(Arc::new(NllOnlyLoss));
        r.register(Arc::new(SdOnlyLoss));
        r.register(Arc::new(CompositeLoss));
        r
    }

    pub fn register(&mut self, s: Arc<dyn LossStrategy>) {
        self.entries.insert(s.mode().name(), s);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn LossStrategy>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::InvalidConfig(format!("unknown loss mode '{name}'")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

pub fn strategy(mode: LossMode) -> &'static dyn LossStrategy {
    match mode {
        LossMode::NllOnly => &NllOnlyLoss,
        LossMode::SdOnly => &SdOnlyLoss,
        LossMode::Composite => &CompositeLoss,
    }
}

/// The scalar objective and its batch-mean components.
pub struct LossOutput {
    pub total: Var,
    pub nll: f64,
    pub sd: f64,
    pub kl: f64,
    pub info: f64,
}

/// Combine per-window, per-mode summed terms `nll, sd: [B, K]` with the latent
/// log-probabilities `log_p, log_q: [B, K]`.
pub fn assemble(tape: &mut Tape, log_p: Var, log_q: Var, nll: Var, sd: Var, config: &ModelConfig) -> Result<LossOutput> {
    let b = tape.shape(log_q)[0] as f64;
    let q = tape.exp(log_q);
    let expect = |tape: &mut Tape, x: Var| -> Result<Var> {
        let qx = tape.mul(q, x)?;
        let per = tape.sum_cols(qx);
        Ok(tape.mean(per))
    };
    let e_nll = expect(tape, nll)?;
    let e_sd = expect(tape, sd)?;
    let ratio = tape.sub(log_q, log_p)?;
    let kl = expect(tape, ratio)?;
    // Î = H(mean q) − mean H(q)
    let q_sum = tape.sum_rows(q);
    let q_bar = tape.scale(q_sum, 1.0 / b);
    let log_bar = tape.log(q_bar);
    let qlb = tape.mul(q_bar, log_bar)?;
    let neg_h_bar = tape.sum(qlb);
    let neg_h = expect(tape, log_q)?;
    let info = tape.sub(neg_h, neg_h_bar)?;

    let (w_nll, w_sd) = strategy(config.loss_mode).weights(config.lambda_sd);
    let mut parts = Vec::new();
    if w_nll != 0.0 {
        parts.push(tape.scale(e_nll, w_nll));
    }
    if w_sd != 0.0 {
        parts.push(tape.scale(e_sd, w_sd));
    }
    parts.push(tape.scale(kl, config.beta));
    parts.push(tape.scale(info, -config.alpha_info));
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    let v = |tape: &Tape, x: Var| tape.value(x).item();
    Ok(LossOutput { total, nll: v(tape, e_nll), sd: v(tape, e_sd), kl: v(tape, kl), info: v(tape, info) })
}

/// Full forward pass and objective for one batch.
pub fn batch_loss(model: &Forecaster, tape: &mut Tape, batch: &Batch) -> Result<LossOutput> {
    let (b, k) = (batch.size, model.config.latent_size);
    let ex = model.encode(tape, batch)?;
    let p_logits = model.prior_logits(tape, ex)?;
    let q_logits = model.posterior_logits(tape, ex, batch)?;
    let log_p = tape.log_softmax(p_logits);
    let log_q = tape.log_softmax(q_logits);
    let dec = model.decode(tape, ex, batch)?;
    let mut nll: Option<Var> = None;
    let mut sd: Option<Var> = None;
    for t in 0..model.config.horizon {
        let n_t = gaussian2_nll_cov(tape, dec.pos_means[t], dec.pos_covs[t], &batch.targets[t])?;
        let s_t = bhattacharyya_cov(tape, dec.pos_means[t], dec.pos_covs[t], &batch.target_dists[t])?;
        nll = Some(match nll {
            None => n_t,
            Some(acc) => tape.add(acc, n_t)?,
        });
        sd = Some(match sd {
            None => s_t,
            Some(acc) => tape.add(acc, s_t)?,
        });
    }
    let nll = tape.reshape(nll.expect("horizon >= 1"), &[b, k])?;
    let sd = tape.reshape(sd.expect("horizon >= 1"), &[b, k])?;
    assemble(tape, log_p, log_q, nll, sd, &model.config)
}
