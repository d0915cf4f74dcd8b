//! Agent-centric forecasting windows extracted from tracked scenes.
//!
//! Every quantity is expressed relative to the modeled agent's current tracked
//! position, so shifting a scene leaves the features unchanged.

use utraj_core::dynamics::DynamicsKind;
use utraj_core::linalg::upper_triangle;
use utraj_core::{Mat2, Scene, Vec2};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::{build_graph, neighbors};

/// Tracked state dimension of every supported tracker.
pub const TRACKED_DIM: usize = 4;
/// `[state, upper triangle of Σ̂, valid]`.
pub const NODE_DIM: usize = TRACKED_DIM + TRACKED_DIM * (TRACKED_DIM + 1) / 2 + 1;
/// `[Δp, v, upper triangle of the position covariance, valid]`, summed over neighbors.
pub const EDGE_DIM: usize = 8;
/// `[p, v]` of the GT future, read only by the posterior head.
pub const FUTURE_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub scene: usize,
    pub agent: usize,
    /// Current step `t`; the forecast covers `t+1 ..= t+T`.
    pub step: i64,
    /// World position the window is centered on.
    pub origin: Vec2,
    /// `H × NODE_DIM`, oldest first, zero rows where the agent is unobserved.
    pub hist: Vec<f64>,
    /// `H × EDGE_DIM`.
    pub edges: Vec<f64>,
    /// Current tracked state in the rollout model's coordinates.
    pub init_state: Vec<f64>,
    /// `T × FUTURE_DIM`.
    pub future: Vec<f64>,
    /// GT future positions relative to `origin`.
    pub targets: Vec<Vec2>,
    /// Tracked position covariances at the future steps.
    pub target_covs: Vec<Mat2>,
}

fn velocity_2d(state: &[f64], bicycle: bool) -> Vec2 {
    if bicycle {
        Vec2::new(state[3] * state[2].cos(), state[3] * state[2].sin())
    } else {
        Vec2::new(state[2], state[3])
    }
}

/// Build the window of `agent` at `step`, or `None` if the agent lacks a
/// current tracked state or a full GT future.
pub fn window(scene: &Scene, scene_idx: usize, agent: usize, step: i64, config: &ModelConfig) -> Result<Option<Window>> {
    let a = &scene.agents[agent];
    let (h, t) = (config.history_len, config.horizon);
    let Some(current) = a.tracked_at(step) else { return Ok(None) };
    if (1..=t as i64).any(|k| a.gt_at(step + k).is_none() || a.tracked_at(step + k).is_none()) {
        return Ok(None);
    }
    if current.state.len() != TRACKED_DIM {
        return Err(Error::Core(utraj_core::Error::DimensionMismatch { expected: TRACKED_DIM, got: current.state.len() }));
    }
    let origin = current.position();
    let dynamics = config.dynamics();

    let mut hist = vec![0.0; h * NODE_DIM];
    let mut edges = vec![0.0; h * EDGE_DIM];
    let graph = build_graph(scene, step, config)?;
    let nbrs = neighbors(&graph, agent);
    for (row, s) in ((step + 1 - h as i64)..=step).enumerate() {
        let own = a.tracked_at(s);
        if let Some(ts) = own {
            let out = &mut hist[row * NODE_DIM..(row + 1) * NODE_DIM];
            out[..TRACKED_DIM].copy_from_slice(ts.state.as_slice());
            out[0] -= origin.x;
            out[1] -= origin.y;
            out[TRACKED_DIM..NODE_DIM - 1].copy_from_slice(&upper_triangle(&ts.cov));
            out[NODE_DIM - 1] = 1.0;
        }
        let anchor = own.map_or(origin, |ts| ts.position());
        let out = &mut edges[row * EDGE_DIM..(row + 1) * EDGE_DIM];
        for &j in &nbrs {
            let other = &scene.agents[j];
            let Some(ns) = other.tracked_at(s) else { continue };
            let other_bicycle = DynamicsKind::for_agent(other.agent_type) == DynamicsKind::Bicycle;
            let dp = ns.position() - anchor;
            let v = velocity_2d(ns.state.as_slice(), other_bicycle);
            let pc = ns.position_cov();
            for (o, x) in out.iter_mut().zip([dp.x, dp.y, v.x, v.y, pc[(0, 0)], pc[(0, 1)], pc[(1, 1)], 1.0]) {
                *o += x;
            }
        }
    }

    let mut init_state: Vec<f64> = current.state.as_slice()[..dynamics.state_dim()].to_vec();
    init_state[0] -= origin.x;
    init_state[1] -= origin.y;

    let mut future = Vec::with_capacity(t * FUTURE_DIM);
    let mut targets = Vec::with_capacity(t);
    let mut target_covs = Vec::with_capacity(t);
    for k in 1..=t as i64 {
        let g = a.gt_at(step + k).expect("checked above");
        let rel = g.pos - origin;
        future.extend_from_slice(&[rel.x, rel.y, g.vel.x, g.vel.y]);
        targets.push(rel);
        target_covs.push(a.tracked_at(step + k).expect("checked above").position_cov());
    }
    Ok(Some(Window { scene: scene_idx, agent, step, origin, hist, edges, init_state, future, targets, target_covs }))
}

/// All windows of the configured agent type with `step ≡ 0 (mod stride)`.
pub fn extract_windows(scenes: &[Scene], config: &ModelConfig, stride: usize) -> Result<Vec<Window>> {
    let stride = stride.max(1) as i64;
    let mut out = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        for (ai, a) in scene.agents.iter().enumerate() {
            if a.agent_type != config.agent_type || a.tracked.is_empty() {
                continue;
            }
            let (Some(first), Some(last)) = (a.first_step(), a.last_step()) else { continue };
            let mut s = first + (stride - first.rem_euclid(stride)) % stride;
            while s + config.horizon as i64 <= last {
                if let Some(w) = window(scene, si, ai, s, config)? {
                    out.push(w);
                }
                s += stride;
            }
        }
    }
    Ok(out)
}
