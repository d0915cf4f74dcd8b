//! Scene JSON: `{dt, agents: [{id, type, gt: [[t,x,y,vx,vy]...], cov: [[t,var_x,var_y]...]}]}`.
//!
//! Filter output carries full state vectors and covariances, which the
//! diagonal `cov` rows cannot express; those are kept in an optional
//! `tracked` list and take precedence over `cov` when reading.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::scene::{AgentTrack, AgentType, GtState, Scene, TrackedState};
use crate::sim::synthetic_state;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    dt: f64,
    agents: Vec<AgentDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    id: i64,
    #[serde(rename = "type")]
    agent_type: AgentType,
    gt: Vec<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cov: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tracked: Option<Vec<TrackedDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackedDoc {
    t: i64,
    state: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

fn is_diagonal_particle(a: &AgentTrack) -> bool {
    a.tracked.iter().zip(&a.gt).all(|(t, g)| {
        let s = synthetic_state(g, t.cov[(0, 0)], t.cov[(1, 1)]);
        s == *t
    })
}

pub fn scene_to_json(scene: &Scene) -> Result<String> {
    let agents = scene
        .agents
        .iter()
        .map(|a| {
            let gt = a.gt.iter().map(|g| [g.step as f64, g.pos.x, g.pos.y, g.vel.x, g.vel.y]).collect();
            let cov = a.tracked.iter().map(|t| [t.step as f64, t.cov[(0, 0)], t.cov[(1, 1)]]).collect();
            let tracked = (!a.tracked.is_empty() && !is_diagonal_particle(a)).then(|| {
                a.tracked
                    .iter()
                    .map(|t| TrackedDoc {
                        t: t.step,
                        state: t.state.iter().copied().collect(),
                        cov: t.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    })
                    .collect()
            });
            AgentDoc { id: a.id, agent_type: a.agent_type, gt, cov, tracked }
        })
        .collect();
    Ok(serde_json::to_string(&SceneDoc { dt: scene.dt, agents })?)
}

fn as_step(v: f64) -> Result<i64> {
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::InvalidConfig(format!("step index {v} is not an integer")));
    }
    Ok(v as i64)
}

pub fn scene_from_json(text: &str) -> Result<Scene> {
    let doc: SceneDoc = serde_json::from_str(text)?;
    let mut agents = Vec::with_capacity(doc.agents.len());
    for a in doc.agents {
        let gt = a
            .gt
            .iter()
            .map(|r| Ok(GtState { step: as_step(r[0])?, pos: Vec2::new(r[1], r[2]), vel: Vec2::new(r[3], r[4]) }))
            .collect::<Result<Vec<_>>>()?;
        let tracked = match a.tracked {
            Some(rows) => rows
                .into_iter()
                .map(|r| {
                    let n = r.state.len();
                    if r.cov.len() != n || r.cov.iter().any(|row| row.len() != n) {
                        return Err(Error::DimensionMismatch { expected: n, got: r.cov.len() });
                    }
                    let cov = DMatrix::from_fn(n, n, |i, j| r.cov[i][j]);
                    Ok(TrackedState { step: r.t, state: DVector::from_vec(r.state), cov })
                })
                .collect::<Result<Vec<_>>>()?,
            None => {
                if !a.cov.is_empty() && a.cov.len() != gt.len() {
                    return Err(Error::DimensionMismatch { expected: gt.len(), got: a.cov.len() });
                }
                a.cov
                    .iter()
                    .zip(&gt)
                    .map(|(c, g)| {
                        if as_step(c[0])? != g.step {
                            return Err(Error::InvalidConfig(format!("agent {} covariance steps differ from GT steps", a.id)));
                        }
                        Ok(synthetic_state(g, c[1], c[2]))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        agents.push(AgentTrack { id: a.id, agent_type: a.agent_type, gt, tracked });
    }
    Scene::new(doc.dt, agents)
}

pub fn write_scene(path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    fs::write(path, scene_to_json(scene)?)?;
    Ok(())
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    scene_from_json(&fs::read_to_string(path)?)
}

/// Write scenes as `scene_00000.json`, `scene_00001.json`, ...
pub fn write_scene_dir(dir: impl AsRef<Path>, scenes: &[Scene]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, s) in scenes.iter().enumerate() {
        write_scene(dir.join(format!("scene_{i:05}.json")), s)?;
    }
    Ok(())
}

/// Read every `*.json` scene in a directory, in file-name order.
pub fn read_scene_dir(dir: impl AsRef<Path>) -> Result<Vec<Scene>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(read_scene).collect()
}
