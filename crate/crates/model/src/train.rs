//! Minibatch training with Adam and per-epoch loss curves.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use utraj_autodiff::{adam_step, AdamConfig, AdamState, Tape};
use utraj_core::rng::rng_for;
use utraj_core::Scene;

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{extract_windows, Window};
use crate::loss::batch_loss;
use crate::network::{Batch, Forecaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub nll_term: f64,
    pub sd_term: f64,
    pub kl_term: f64,
    pub info_term: f64,
}

#[derive(Default)]
struct Accum {
    n: f64,
    sums: [f64; 5],
}

impl Accum {
    fn add(&mut self, weight: usize, vals: [f64; 5]) {
        let w = weight as f64;
        self.n += w;
        for (s, v) in self.sums.iter_mut().zip(vals) {
            *s += w * v;
        }
    }

    fn row(&self, epoch: usize, split: &str) -> CurveRow {
        let m: Vec<f64> = self.sums.iter().map(|s| s / self.n).collect();
        CurveRow { epoch, split: split.into(), loss: m[0], nll_term: m[1], sd_term: m[2], kl_term: m[3], info_term: m[4] }
    }
}

pub struct TrainOutput {
    pub model: Forecaster,
    pub curves: Vec<CurveRow>,
}

fn common_dt(scenes: &[Scene]) -> Result<f64> {
    let dt = scenes.first().map(|s| s.dt).ok_or(Error::EmptyDataset("training"))?;
    if scenes.iter().any(|s| (s.dt - dt).abs() > 1e-12) {
        return Err(Error::InvalidConfig("all scenes must share one dt".into()));
    }
    Ok(dt)
}

/// Diverged weights surface as non-positive-definite covariances inside the
/// density nodes before the loss itself can be checked.
fn diverged(e: &Error) -> bool {
    use utraj_core::Error::NotPositiveDefinite;
    matches!(e, Error::Core(NotPositiveDefinite { .. }) | Error::Autodiff(utraj_autodiff::Error::Core(NotPositiveDefinite { .. })))
}

fn checked_loss(model: &Forecaster, tape: &mut Tape, batch: &Batch, epoch: usize, bi: usize) -> Result<crate::loss::LossOutput> {
    batch_loss(model, tape, batch).map_err(|e| if diverged(&e) { Error::NonFiniteLoss { epoch, batch: bi } } else { e })
}

/// Evaluate the objective without updating weights.
pub fn evaluate_loss(model: &Forecaster, windows: &[&Window], batch_size: usize) -> Result<CurveRow> {
    let mut acc = Accum::default();
    for (bi, chunk) in windows.chunks(batch_size).enumerate() {
        let batch = Batch::new(chunk, &model.config)?;
        let mut tape = Tape::new();
        let out = checked_loss(model, &mut tape, &batch, 0, bi)?;
        acc.add(chunk.len(), [tape.value(out.total).item(), out.nll, out.sd, out.kl, out.info]);
    }
    Ok(acc.row(0, "val"))
}

/// Train a fresh model. Deterministic given `seed`.
pub fn train(train: &[Scene], val: &[Scene], model_config: &ModelConfig, config: &TrainConfig, seed: u64) -> Result<TrainOutput> {
    model_config.validate()?;
    config.validate()?;
    let dt = common_dt(train)?;
    let mut model = Forecaster::new(model_config.clone(), dt, seed)?;
    let candidates = extract_windows(train, model_config, config.window_stride)?;
    if candidates.is_empty() {
        return Err(Error::EmptyDataset("training"));
    }
    let mut val_windows = extract_windows(val, model_config, config.window_stride)?;
    if val_windows.is_empty() {
        return Err(Error::EmptyDataset("validation"));
    }
    if let Some(n) = config.val_samples {
        val_windows.shuffle(&mut rng_for(seed, 0x7A1));
        val_windows.truncate(n);
    }
    let val_refs: Vec<&Window> = val_windows.iter().collect();
    log::info!("training on {} candidate windows, validating on {}", candidates.len(), val_refs.len());

    let adam = AdamConfig { lr: config.lr, clip_norm: config.clip_norm, ..AdamConfig::default() };
    let mut state = AdamState::new(&model.store);
    let mut curves = Vec::with_capacity(2 * config.epochs);
    let per_epoch = config.samples_per_epoch.unwrap_or(candidates.len()).min(candidates.len());
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.shuffle(&mut rng_for(seed, 0xE000 + epoch as u64));
        order.truncate(per_epoch);
        let mut acc = Accum::default();
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let chunk: Vec<&Window> = idx.iter().map(|&i| &candidates[i]).collect();
            let batch = Batch::new(&chunk, model_config)?;
            let mut tape = Tape::new();
            let out = checked_loss(&model, &mut tape, &batch, epoch, bi)?;
            let total = tape.value(out.total).item();
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = tape.backward(out.total)?.param_grads(&model.store);
            if grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            adam_step(&mut model.store, &grads, &mut state, &adam)?;
            acc.add(chunk.len(), [total, out.nll, out.sd, out.kl, out.info]);
        }
        let tr = acc.row(epoch, "train");
        let mut va = evaluate_loss(&model, &val_refs, config.batch_size).map_err(|e| match e {
            Error::NonFiniteLoss { batch, .. } => Error::NonFiniteLoss { epoch, batch },
            e => e,
        })?;
        va.epoch = epoch;
        log::info!("epoch {epoch}: train {:.4} val {:.4}", tr.loss, va.loss);
        curves.push(tr);
        curves.push(va);
    }
    Ok(TrainOutput { model, curves })
}

pub fn write_curves<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_curves<R: std::io::Read>(r: R) -> Result<Vec<CurveRow>> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}
