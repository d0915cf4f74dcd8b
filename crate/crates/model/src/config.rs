use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use utraj_core::dynamics::DynamicsKind;
use utraj_core::AgentType;

use crate::error::{Error, Result};

/// Which terms of the training objective are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Log-likelihood only (the Trajectron++ baseline).
    NllOnly,
    /// Statistical distance only.
    SdOnly,
    #[default]
    Composite,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::NllOnly, LossMode::SdOnly, LossMode::Composite];

    /// Short name used on the command line and in report tables.
    pub fn name(&self) -> &'static str {
        match self {
            LossMode::NllOnly => "nll",
            LossMode::SdOnly => "sd",
            LossMode::Composite => "composite",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" | "nll_only" => Ok(LossMode::NllOnly),
            "sd" | "sd_only" => Ok(LossMode::SdOnly),
            "composite" => Ok(LossMode::Composite),
            other => Err(Error::InvalidConfig(format!("unknown loss mode '{other}'"))),
        }
    }
}

/// Interaction radius `d(from, to)` in meters; the pair is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusEntry {
    pub from: AgentType,
    pub to: AgentType,
    pub radius: f64,
}

pub fn default_radius_table() -> Vec<RadiusEntry> {
    let mut out = Vec::new();
    for from in AgentType::ALL {
        for to in AgentType::ALL {
            let radius = match (from, to) {
                (AgentType::Particle, AgentType::Particle) => 5.0,
                (AgentType::Pedestrian, AgentType::Pedestrian) => 3.0,
                (AgentType::Vehicle, AgentType::Vehicle) => 15.0,
                (AgentType::Vehicle, _) | (_, AgentType::Vehicle) => 10.0,
                _ => 3.0,
            };
            out.push(RadiusEntry { from, to, radius });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Agents of this type are forecast; neighbors may be of any type.
    pub agent_type: AgentType,
    /// Observed steps including the current one.
    pub history_len: usize,
    /// Forecast steps.
    pub horizon: usize,
    pub latent_size: usize,
    pub hist_hidden: usize,
    pub edge_hidden: usize,
    pub dec_hidden: usize,
    /// Units per direction of the future encoder.
    pub q_hidden: usize,
    pub edge_radius: Vec<RadiusEntry>,
    pub loss_mode: LossMode,
    pub beta: f64,
    pub lambda_sd: f64,
    pub alpha_info: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            agent_type: AgentType::Particle,
            history_len: 8,
            horizon: 8,
            latent_size: 25,
            hist_hidden: 32,
            edge_hidden: 8,
            dec_hidden: 128,
            q_hidden: 32,
            edge_radius: default_radius_table(),
            loss_mode: LossMode::Composite,
            beta: 1.0,
            lambda_sd: 1.0,
            alpha_info: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.history_len == 0 || self.horizon == 0 {
            return bad("history_len and horizon must be >= 1");
        }
        if self.latent_size == 0 {
            return bad("latent_size must be >= 1");
        }
        if [self.hist_hidden, self.edge_hidden, self.dec_hidden, self.q_hidden].contains(&0) {
            return bad("hidden sizes must be >= 1");
        }
        if !(self.lambda_sd >= 0.0 && self.beta >= 0.0 && self.alpha_info >= 0.0) {
            return bad("lambda_sd, beta and alpha_info must be non-negative");
        }
        for e in &self.edge_radius {
            if !(e.radius >= 0.0 && e.radius.is_finite()) {
                return bad("edge radii must be finite and non-negative");
            }
        }
        for from in AgentType::ALL {
            for to in AgentType::ALL {
                self.radius(from, to)?;
            }
        }
        Ok(())
    }

    pub fn radius(&self, from: AgentType, to: AgentType) -> Result<f64> {
        self.edge_radius
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map(|e| e.radius)
            .ok_or_else(|| utraj_core::Error::MissingRadiusEntry(from.to_string(), to.to_string()).into())
    }

    pub fn dynamics(&self) -> DynamicsKind {
        DynamicsKind::for_agent(self.agent_type)
    }

    /// Weights `(w_nll, w_sd)` of the likelihood and distance terms.
    pub fn term_weights(&self) -> (f64, f64) {
        crate::loss::strategy(self.loss_mode).weights(self.lambda_sd)
    }

    /// A small configuration for tests and gradient checks.
    pub fn tiny() -> Self {
        Self {
            history_len: 3,
            horizon: 2,
            latent_size: 2,
            hist_hidden: 4,
            edge_hidden: 4,
            dec_hidden: 4,
            q_hidden: 4,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Spacing in steps between candidate forecasting windows.
    pub window_stride: usize,
    /// Windows drawn per epoch from the training candidates; all when unset.
    pub samples_per_epoch: Option<usize>,
    /// Validation windows evaluated per epoch (a fixed subset); all when unset.
    pub val_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            clip_norm: Some(1.0),
            window_stride: 1,
            samples_per_epoch: None,
            val_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.window_stride == 0 {
            return Err(Error::InvalidConfig("epochs, batch_size and window_stride must be >= 1".into()));
        }
        if !(self.lr > 0.0) || self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::InvalidConfig("lr and clip_norm must be positive".into()));
        }
        if self.samples_per_epoch == Some(0) || self.val_samples == Some(0) {
            return Err(Error::InvalidConfig("sample counts must be >= 1 when set".into()));
        }
        Ok(())
    }
}
