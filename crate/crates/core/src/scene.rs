//! Agents, tracks and scenes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    Particle,
    Pedestrian,
    Vehicle,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Particle, AgentType::Pedestrian, AgentType::Vehicle];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentType::Particle => "particle",
            AgentType::Pedestrian => "pedestrian",
            AgentType::Vehicle => "vehicle",
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "particle" => Ok(AgentType::Particle),
            "pedestrian" => Ok(AgentType::Pedestrian),
            "vehicle" => Ok(AgentType::Vehicle),
            _ => Err(Error::UnknownName { kind: "agent type", name: s.to_string() }),
        }
    }
}

/// Ground-truth kinematic state `[x, y, vx, vy]` at an integer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtState {
    pub step: i64,
    pub pos: Vec2,
    pub vel: Vec2,
}

impl GtState {
    pub fn new(step: i64, x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { step, pos: Vec2::new(x, y), vel: Vec2::new(vx, vy) }
    }
}

/// Estimated state and covariance produced by a tracker (or attached synthetically).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedState {
    pub step: i64,
    pub state: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl TrackedState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn position_cov(&self) -> Mat2 {
        Mat2::new(self.cov[(0, 0)], self.cov[(0, 1)], self.cov[(1, 0)], self.cov[(1, 1)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: i64,
    pub agent_type: AgentType,
    pub gt: Vec<GtState>,
    pub tracked: Vec<TrackedState>,
}

impl AgentTrack {
    pub fn new(id: i64, agent_type: AgentType, gt: Vec<GtState>) -> Self {
        Self { id, agent_type, gt, tracked: Vec::new() }
    }

    pub fn first_step(&self) -> Option<i64> {
        self.gt.first().map(|s| s.step)
    }

    pub fn last_step(&self) -> Option<i64> {
        self.gt.last().map(|s| s.step)
    }

    /// GT state at `step`, using the fact that tracks are contiguous.
    pub fn gt_at(&self, step: i64) -> Option<&GtState> {
        let first = self.first_step()?;
        let idx = usize::try_from(step - first).ok()?;
        self.gt.get(idx).filter(|s| s.step == step)
    }

    pub fn tracked_at(&self, step: i64) -> Option<&TrackedState> {
        let first = self.tracked.first()?.step;
        let idx = usize::try_from(step - first).ok()?;
        self.tracked.get(idx).filter(|s| s.step == step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Seconds per step.
    pub dt: f64,
    /// Number of steps spanned by the scene.
    pub duration: i64,
    pub agents: Vec<AgentTrack>,
}

impl Scene {
    pub fn new(dt: f64, agents: Vec<AgentTrack>) -> Result<Self> {
        let duration = agents.iter().filter_map(|a| a.last_step()).max().map_or(0, |m| m + 1);
        let scene = Self { dt, duration, agents };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        for a in &self.agents {
            for w in a.gt.windows(2) {
                if w[1].step != w[0].step + 1 {
                    return Err(Error::NonMonotoneFrames { agent: a.id });
                }
            }
            if let (Some(f), Some(l)) = (a.first_step(), a.last_step()) {
                if f < 0 || l >= self.duration {
                    return Err(Error::InvalidConfig(format!("agent {} lies outside [0, {})", a.id, self.duration)));
                }
            }
            if a.gt.iter().any(|s| !(s.pos.x.is_finite() && s.pos.y.is_finite())) {
                return Err(Error::InvalidConfig(format!("agent {} has non-finite positions", a.id)));
            }
            if !a.tracked.is_empty() {
                let same = a.tracked.len() == a.gt.len() && a.tracked.iter().zip(&a.gt).all(|(t, g)| t.step == g.step);
                if !same {
                    return Err(Error::InvalidConfig(format!("agent {} tracked steps differ from GT steps", a.id)));
                }
            }
        }
        Ok(())
    }

    pub fn is_tracked(&self) -> bool {
        !self.agents.is_empty() && self.agents.iter().all(|a| !a.tracked.is_empty())
    }

    /// Indices of agents with a GT state at `step`.
    pub fn present_at(&self, step: i64) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.agents[i].gt_at(step).is_some()).collect()
    }

    /// Shift every position (GT and tracked) by `offset`.
    pub fn translated(&self, offset: Vec2) -> Scene {
        let mut out = self.clone();
        for a in &mut out.agents {
            for s in &mut a.gt {
                s.pos += offset;
            }
            for t in &mut a.tracked {
                t.state[0] += offset.x;
                t.state[1] += offset.y;
            }
        }
        out
    }

    /// Scale every tracked covariance by `factor`.
    pub fn with_scaled_covariances(&self, factor: f64) -> Scene {
        let mut out = self.clone();
        for a in &mut out.agents {
            for t in &mut a.tracked {
                t.cov *= factor;
            }
        }
        out
    }
}
