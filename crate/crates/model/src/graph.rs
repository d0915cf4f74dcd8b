//! Directed interaction graph over the agents present at one step.

use utraj_core::{Scene, Vec2};

use crate::config::ModelConfig;
use crate::error::Result;

/// Position used for graph construction: the tracked estimate when available, else GT.
pub fn observed_position(scene: &Scene, agent: usize, step: i64) -> Option<Vec2> {
    let a = &scene.agents[agent];
    a.tracked_at(step).map(|t| t.position()).or_else(|| a.gt_at(step).map(|g| g.pos))
}

/// Directed edges `(i, j)` with `‖p_i − p_j‖ ≤ d(C_i, C_j)`, sorted.
pub fn build_graph(scene: &Scene, step: i64, config: &ModelConfig) -> Result<Vec<(usize, usize)>> {
    let present: Vec<(usize, Vec2)> =
        (0..scene.agents.len()).filter_map(|i| observed_position(scene, i, step).map(|p| (i, p))).collect();
    let mut edges = Vec::new();
    for &(i, pi) in &present {
        for &(j, pj) in &present {
            if i == j {
                continue;
            }
            let d = config.radius(scene.agents[i].agent_type, scene.agents[j].agent_type)?;
            if (pi - pj).norm() <= d {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// Agents `j` that agent `i` attends to at `step` (edges `i → j`).
pub fn neighbors(edges: &[(usize, usize)], i: usize) -> Vec<usize> {
    edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect()
}
