//! One function per subcommand. Each writes only below the output path it is given.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use utraj_core::filters::{track_scene, TrackingConfig};
use utraj_core::io::{emit_tables, plot_scene, read_scene_dir, write_scene_dir, write_table_csv, AgentPrediction};
use utraj_core::metrics::EvalReport;
use utraj_core::rng::derive_seed;
use utraj_core::sim::{build_dataset, SimConfig};
use utraj_core::statdist::{distance_study, write_study_csv, StudyGrid};
use utraj_core::{AgentType, Scene};
use utraj_model::{evaluate as eval_model, predict, train as train_model, EvalConfig, Forecaster, LossMode, ModelConfig, TrainConfig};

use crate::error::{io_err, Error, Result};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
/// Test scenes rendered by `evaluate --figures`.
pub const FIGURE_SCENES: usize = 3;
const SIGMA_LEVELS: [usize; 3] = [1, 2, 3];

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io_err(p))
}

fn write_file(p: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(p, bytes).map_err(io_err(p))
}

/// Scenes of one split: `<data>/<split>` when present, else `<data>` itself.
pub fn read_split(data: &Path, split: &str) -> Result<Vec<Scene>> {
    let sub = data.join(split);
    let dir = if sub.is_dir() { sub } else { data.to_path_buf() };
    if !dir.is_dir() {
        return Err(Error::Usage(format!("data directory {} does not exist", dir.display())));
    }
    Ok(read_scene_dir(&dir)?)
}

/// Simulate and write `train/`, `val/` and `test/` below `out`.
pub fn simulate(sim: &SimConfig, out: &Path) -> Result<[usize; 3]> {
    let ds = build_dataset(sim)?;
    for (name, scenes) in SPLITS.iter().zip([&ds.train, &ds.val, &ds.test]) {
        let dir = out.join(name);
        create_dir(&dir)?;
        write_scene_dir(&dir, scenes)?;
    }
    Ok([ds.train.len(), ds.val.len(), ds.test.len()])
}

/// Squared position error sum and count for agents of one type.
fn squared_errors(scene: &Scene, agent_type: AgentType, burn_in: usize) -> (f64, usize) {
    let mut acc = (0.0, 0);
    for a in scene.agents.iter().filter(|a| a.agent_type == agent_type) {
        for (t, g) in a.tracked.iter().zip(&a.gt).skip(burn_in) {
            acc.0 += (t.position() - g.pos).norm_squared();
            acc.1 += 1;
        }
    }
    acc
}

fn track_dir(input: &Path, out: &Path, agent_type: AgentType, tracking: &TrackingConfig, seed: u64, burn_in: usize) -> Result<(f64, usize)> {
    let scenes = read_scene_dir(input)?;
    let tracked: Vec<Scene> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, s)| -> Result<Scene> {
            let filtered = track_scene(s, tracking, derive_seed(seed, i as u64))?;
            let mut out = s.clone();
            for (dst, src) in out.agents.iter_mut().zip(filtered.agents) {
                if dst.agent_type == agent_type {
                    dst.tracked = src.tracked;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    create_dir(out)?;
    write_scene_dir(out, &tracked)?;
    Ok(tracked.iter().map(|s| squared_errors(s, agent_type, burn_in)).fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1)))
}

/// Replace the tracked states of `agent_type` agents with filter output.
///
/// `input` is either a dataset root with split subdirectories (mirrored below
/// `out`) or a flat scene directory. Returns the position RMSE after `burn_in`.
pub fn track(input: &Path, out: &Path, agent_type: AgentType, tracking: &TrackingConfig, seed: u64, burn_in: usize) -> Result<f64> {
    if !input.is_dir() {
        return Err(Error::Usage(format!("input directory {} does not exist", input.display())));
    }
    let splits: Vec<&str> = SPLITS.iter().copied().filter(|s| input.join(s).is_dir()).collect();
    let (sq, n) = if splits.is_empty() {
        track_dir(input, out, agent_type, tracking, seed, burn_in)?
    } else {
        let mut total = (0.0, 0);
        for (k, split) in splits.iter().enumerate() {
            let r = track_dir(&input.join(split), &out.join(split), agent_type, tracking, derive_seed(seed, 0x7AC + k as u64), burn_in)?;
            total = (total.0 + r.0, total.1 + r.1);
        }
        total
    };
    if n == 0 {
        return Err(Error::Usage(format!("no tracked {agent_type} agents in {}", input.display())));
    }
    Ok((sq / n as f64).sqrt())
}

/// Curves are written next to the checkpoint.
pub fn curves_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("curves.csv")
}

/// Train one model on `<data>/train` with validation on `<data>/val`.
pub fn train(data: &Path, model: &ModelConfig, config: &TrainConfig, mode: LossMode, seed: u64, out: &Path) -> Result<Forecaster> {
    let tr = read_split(data, "train")?;
    let va = read_split(data, "val")?;
    let model_cfg = ModelConfig { loss_mode: mode, ..model.clone() };
    let result = train_model(&tr, &va, &model_cfg, config, seed)?;
    write_file(out, result.model.to_json()?)?;
    let mut buf = Vec::new();
    utraj_model::write_curves(&result.curves, &mut buf)?;
    write_file(&curves_path(out), buf)?;
    Ok(result.model)
}

pub fn method_name(ckpt: &Path) -> String {
    ckpt.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

/// Forecast every modeled agent of `scene` from `step` and render it.
pub fn figure(model: &Forecaster, scene: &Scene, step: i64) -> Result<String> {
    let mut preds = Vec::new();
    for (i, a) in scene.agents.iter().enumerate() {
        if a.agent_type != model.config.agent_type {
            continue;
        }
        if let Some(p) = predict(model, scene, i, step)? {
            preds.push(AgentPrediction { agent: i, origin_step: step, steps: p.steps });
        }
    }
    Ok(plot_scene(scene, &preds, &SIGMA_LEVELS))
}

/// A forecast origin near the middle of the scene.
pub fn figure_step(scene: &Scene, model: &ModelConfig) -> i64 {
    let last = scene.agents.iter().filter_map(|a| a.last_step()).max().unwrap_or(0);
    (last / 2).max(model.history_len as i64 - 1)
}

/// Evaluate checkpoints on `<data>/test`; writes `<method>.csv` per model and `comparison.csv`.
pub fn evaluate(ckpts: &[PathBuf], data: &Path, out: &Path, config: &EvalConfig, figures: bool) -> Result<Vec<(String, EvalReport)>> {
    if ckpts.is_empty() {
        return Err(Error::Usage("evaluate needs at least one --ckpt".into()));
    }
    let test = read_split(data, "test")?;
    create_dir(out)?;
    let mut reports = Vec::with_capacity(ckpts.len());
    for (i, path) in ckpts.iter().enumerate() {
        let model = Forecaster::load(path).map_err(|e| match e {
            utraj_model::Error::Io(source) => Error::Io { path: path.clone(), source },
            e => e.into(),
        })?;
        let name = method_name(path);
        if reports.iter().any(|(n, _): &(String, EvalReport)| n == &name) {
            return Err(Error::Usage(format!("two checkpoints share the method name '{name}'")));
        }
        let report = eval_model(&model, &test, config)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_file(&out.join(format!("{name}.csv")), buf)?;
        if figures {
            for (k, scene) in test.iter().take(FIGURE_SCENES).enumerate() {
                let svg = figure(&model, scene, figure_step(scene, &model.config))?;
                write_file(&out.join("figures").join(format!("{name}_scene{k:03}.svg")), svg)?;
            }
        }
        log::info!("evaluated {} ({}/{})", name, i + 1, ckpts.len());
        reports.push((name, report));
    }
    let rows = emit_tables(&reports)?;
    let mut buf = Vec::new();
    write_table_csv(&rows, &mut buf)?;
    write_file(&out.join("comparison.csv"), buf)?;
    Ok(reports)
}

pub fn distances(out: &Path) -> Result<usize> {
    let rows = distance_study(&StudyGrid::default())?;
    let mut buf = Vec::new();
    write_study_csv(&rows, &mut buf)?;
    write_file(out, buf)?;
    Ok(rows.len())
}
