//! TOML run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use utraj_core::filters::{FilterConfig, TrackingConfig};
use utraj_core::sim::SimConfig;
use utraj_core::AgentType;
use utraj_model::{EvalConfig, ModelConfig, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    /// Replace the tracked states of the modeled agent type with filter output
    /// in the pipeline. Off by default: simulated particles carry synthetic Σ̂.
    pub apply: bool,
    /// Steps skipped when reporting tracking RMSE.
    pub burn_in: usize,
    /// Per-type overrides of the default filter noises.
    pub filters: BTreeMap<AgentType, FilterConfig>,
}

impl FilterSection {
    pub fn tracking(&self, dt: f64) -> TrackingConfig {
        let mut t = TrackingConfig::defaults(dt);
        t.filters.extend(self.filters.clone());
        t
    }
}

/// Output locations, relative to the run's `--out` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: PathBuf,
    pub tracked: PathBuf,
    pub models: PathBuf,
    pub eval: PathBuf,
    pub figures: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            tracked: "tracked".into(),
            models: "models".into(),
            eval: "eval".into(),
            figures: "figures".into(),
        }
    }
}

impl PathsSection {
    fn validate(&self) -> std::result::Result<(), String> {
        for p in [&self.data, &self.tracked, &self.models, &self.eval, &self.figures] {
            if p.as_os_str().is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
                return Err(format!("paths entry '{}' must be a relative path inside the output directory", p.display()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub filter: FilterSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sim: SimConfig::default(),
            filter: FilterSection { burn_in: 10, ..FilterSection::default() },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config { path: path.into(), message: e.message().to_string() })?;
        cfg.validate().map_err(|message| Error::Config { path: path.into(), message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
        Self::from_toml(&text, path)
    }

    /// Load `path` if given, else the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.sim.validate().map_err(|e| e.to_string())?;
        for f in self.filter.filters.values() {
            f.validate().map_err(|e| e.to_string())?;
        }
        self.model.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.eval.validate(self.model.horizon).map_err(|e| e.to_string())?;
        self.paths.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
