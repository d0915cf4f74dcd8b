//! End-to-end experiment with per-stage stamp files.
//!
//! A stage whose stamp exists under `<out>/.stamps/` is skipped; deleting the
//! stamp reruns it (later stages keep their stamps and are not invalidated).

use std::fs;
use std::path::{Path, PathBuf};

use utraj_core::io::{read_scene_dir, write_scene_dir};
use utraj_model::{Forecaster, LossMode};

use crate::commands::{self, SPLITS};
use crate::config::RunConfig;
use crate::error::{io_err, Result};

pub const STAMP_DIR: &str = ".stamps";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

type StageFn<'a> = Box<dyn Fn() -> Result<()> + 'a>;

pub struct Pipeline<'a> {
    out: &'a Path,
    stages: Vec<(String, StageFn<'a>)>,
}

pub fn stamp_path(out: &Path, stage: &str) -> PathBuf {
    out.join(STAMP_DIR).join(format!("{stage}.done"))
}

pub fn checkpoint_path(cfg: &RunConfig, out: &Path, mode: LossMode) -> PathBuf {
    out.join(&cfg.paths.models).join(format!("{}.json", mode.name()))
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, out: &'a Path) -> Self {
        let mut stages: Vec<(String, StageFn<'a>)> = Vec::new();
        let data = out.join(&cfg.paths.data);
        let tracked = out.join(&cfg.paths.tracked);

        let (d, c) = (data.clone(), cfg);
        stages.push((
            "simulate".into(),
            Box::new(move || {
                let n = commands::simulate(&c.sim, &d)?;
                log::info!("simulated {n:?} scenes");
                Ok(())
            }),
        ));

        let (d, t) = (data.clone(), tracked.clone());
        stages.push((
            "track".into(),
            Box::new(move || {
                if c.filter.apply {
                    let tracking = c.filter.tracking(c.sim.dt);
                    let rmse = commands::track(&d, &t, c.model.agent_type, &tracking, c.seed, c.filter.burn_in)?;
                    log::info!("tracking RMSE {rmse:.4} m");
                } else {
                    for split in SPLITS {
                        let scenes = read_scene_dir(d.join(split))?;
                        write_scene_dir(t.join(split), &scenes)?;
                    }
                }
                Ok(())
            }),
        ));

        for mode in LossMode::ALL {
            let t = tracked.clone();
            stages.push((
                format!("train_{}", mode.name()),
                Box::new(move || {
                    commands::train(&t, &c.model, &c.train, mode, c.seed, &checkpoint_path(c, out, mode))?;
                    Ok(())
                }),
            ));
        }

        let ckpts: Vec<PathBuf> = LossMode::ALL.iter().map(|&m| checkpoint_path(cfg, out, m)).collect();
        let (t, ck) = (tracked.clone(), ckpts.clone());
        stages.push((
            "evaluate".into(),
            Box::new(move || {
                commands::evaluate(&ck, &t, &out.join(&c.paths.eval), &c.eval, false)?;
                Ok(())
            }),
        ));

        stages.push((
            "figures".into(),
            Box::new(move || {
                let test = commands::read_split(&tracked, "test")?;
                for path in &ckpts {
                    let model = Forecaster::load(path)?;
                    let name = commands::method_name(path);
                    for (k, scene) in test.iter().take(commands::FIGURE_SCENES).enumerate() {
                        let svg = commands::figure(&model, scene, commands::figure_step(scene, &model.config))?;
                        let dest = out.join(&c.paths.figures).join(format!("{name}_scene{k:03}.svg"));
                        fs::create_dir_all(dest.parent().expect("joined path")).map_err(io_err(&dest))?;
                        fs::write(&dest, svg).map_err(io_err(&dest))?;
                    }
                }
                Ok(())
            }),
        ));
        Self { out, stages }
    }

    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn run(&self) -> Result<Vec<(String, StageOutcome)>> {
        let stamps = self.out.join(STAMP_DIR);
        fs::create_dir_all(&stamps).map_err(io_err(&stamps))?;
        let mut outcomes = Vec::with_capacity(self.stages.len());
        for (name, stage) in &self.stages {
            let stamp = stamp_path(self.out, name);
            if stamp.exists() {
                log::info!("stage {name}: up to date");
                outcomes.push((name.clone(), StageOutcome::Skipped));
                continue;
            }
            log::info!("stage {name}: running");
            stage()?;
            fs::write(&stamp, format!("{name}\n")).map_err(io_err(&stamp))?;
            outcomes.push((name.clone(), StageOutcome::Ran));
        }
        Ok(outcomes)
    }
}

/// Run every stage, writing the resolved configuration to `<out>/config.toml` first.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Vec<(String, StageOutcome)>> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let resolved = out.join("config.toml");
    fs::write(&resolved, cfg.to_toml()).map_err(io_err(&resolved))?;
    Pipeline::new(cfg, out).run()
}
