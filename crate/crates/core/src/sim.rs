//! Charged-particle scenarios with exponential social-force repulsion, and the
//! synthetic state-uncertainty generator attached to them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::rng::{derive_seed, rng_for};
use crate::scene::{AgentTrack, AgentType, GtState, Scene, TrackedState};

/// Minimum separation (m) below which two agents are considered coincident.
pub const R_MIN: f64 = 1e-6;
const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovGenConfig {
    /// Mean of the per-agent base variance (m²).
    pub base_var_mean: f64,
    /// Standard deviation of the per-agent base variance (m²).
    pub base_var_std: f64,
    /// Per-step additive jitter standard deviation (m²).
    pub step_noise_std: f64,
    /// Lower clamp on every generated variance (m²).
    pub var_min: f64,
}

impl Default for CovGenConfig {
    fn default() -> Self {
        Self { base_var_mean: 0.2, base_var_std: 0.05, step_noise_std: 0.02, var_min: 1e-4 }
    }
}

impl CovGenConfig {
    /// Uniformly rescale the generated variances.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            base_var_mean: self.base_var_mean * factor,
            base_var_std: self.base_var_std * factor,
            step_noise_std: self.step_noise_std * factor,
            var_min: self.var_min,
        }
    }

    /// Configuration for training on large uncertainties.
    pub fn large(&self) -> Self {
        self.scaled(2.5)
    }

    /// Configuration for evaluating on small uncertainties.
    pub fn small(&self) -> Self {
        self.scaled(0.25)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_var_std >= 0.0 && self.step_noise_std >= 0.0 && self.var_min > 0.0) {
            return Err(Error::InvalidConfig("cov_gen standard deviations must be >= 0 and var_min > 0".into()));
        }
        if !(self.base_var_mean > 3.0 * self.base_var_std) {
            return Err(Error::InvalidConfig("cov_gen requires base_var_mean > 3·base_var_std".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_agents: usize,
    /// Seconds per step.
    pub dt: f64,
    /// Scenario length in seconds.
    pub duration: f64,
    pub counts: SplitCounts,
    /// Repulsion amplitude (N, unit mass).
    pub a_rep: f64,
    /// Repulsion length scale (m).
    pub b_rep: f64,
    /// Linear velocity damping (1/s).
    pub damping: f64,
    /// Initial positions are uniform in `[lo, hi]²` (m).
    pub init_position_range: (f64, f64),
    /// Initial speeds are uniform in `[lo, hi]` (m/s) with a uniform heading.
    pub init_speed_range: (f64, f64),
    pub cov_gen: CovGenConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 3,
            dt: 0.1,
            duration: 30.0,
            counts: SplitCounts { train: 250, val: 75, test: 50 },
            a_rep: 2.0,
            b_rep: 1.0,
            damping: 0.1,
            init_position_range: (-5.0, 5.0),
            init_speed_range: (0.0, 1.5),
            cov_gen: CovGenConfig::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("sim.dt must be positive");
        }
        if !(self.duration >= 0.0) {
            return bad("sim.duration must be nonnegative");
        }
        if self.n_agents == 0 {
            return bad("sim.n_agents must be positive");
        }
        if self.counts.train == 0 || self.counts.val == 0 || self.counts.test == 0 {
            return bad("sim.counts must be positive");
        }
        if !(self.b_rep > 0.0) || !(self.a_rep >= 0.0) || !(self.damping >= 0.0) {
            return bad("sim force parameters must satisfy a_rep >= 0, b_rep > 0, damping >= 0");
        }
        if !(self.init_position_range.0 <= self.init_position_range.1)
            || !(0.0 <= self.init_speed_range.0 && self.init_speed_range.0 <= self.init_speed_range.1)
        {
            return bad("sim init ranges must be ordered");
        }
        self.cov_gen.validate()
    }

    /// Number of recorded states per agent, including t = 0.
    pub fn n_states(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }
}

/// Sum of pairwise exponential repulsions on agent `i` (no damping).
pub fn pairwise_repulsion(positions: &[Vec2], i: usize, config: &SimConfig) -> Result<Vec2> {
    let mut f = Vec2::zeros();
    for (j, pj) in positions.iter().enumerate() {
        if j == i {
            continue;
        }
        let d = positions[i] - pj;
        let dist = d.norm();
        if dist < R_MIN {
            return Err(Error::AgentsCoincident { i, j, distance: dist });
        }
        f += d / dist * (config.a_rep * (-dist / config.b_rep).exp());
    }
    Ok(f)
}

/// Net force on agent `i`: pairwise repulsion minus linear damping.
pub fn social_force(positions: &[Vec2], velocities: &[Vec2], i: usize, config: &SimConfig) -> Result<Vec2> {
    Ok(pairwise_repulsion(positions, i, config)? - velocities[i] * config.damping)
}

fn rollout(config: &SimConfig, mut pos: Vec<Vec2>, mut vel: Vec<Vec2>) -> Result<Vec<Vec<GtState>>> {
    let n = pos.len();
    let steps = config.n_states();
    let dt = config.dt;
    let mut out: Vec<Vec<GtState>> = (0..n).map(|_| Vec::with_capacity(steps)).collect();
    for k in 0..steps {
        for i in 0..n {
            out[i].push(GtState { step: k as i64, pos: pos[i], vel: vel[i] });
        }
        if k + 1 == steps {
            break;
        }
        let acc = (0..n).map(|i| social_force(&pos, &vel, i, config)).collect::<Result<Vec<_>>>()?;
        for i in 0..n {
            pos[i] += vel[i] * dt + acc[i] * (0.5 * dt * dt);
            vel[i] += acc[i] * dt;
        }
    }
    Ok(out)
}

/// One randomized scenario; initial conditions are resampled if agents coincide.
pub fn simulate_scenario(config: &SimConfig, seed: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = rng_for(seed, 0x5EED);
    let (lo, hi) = config.init_position_range;
    let (slo, shi) = config.init_speed_range;
    let mut last_err = None;
    for _ in 0..MAX_RESAMPLES {
        let mut pos = Vec::with_capacity(config.n_agents);
        let mut vel = Vec::with_capacity(config.n_agents);
        for _ in 0..config.n_agents {
            let p = Vec2::new(uniform(&mut rng, lo, hi), uniform(&mut rng, lo, hi));
            let speed = uniform(&mut rng, slo, shi);
            let heading = uniform(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
            pos.push(p);
            vel.push(Vec2::new(heading.cos(), heading.sin()) * speed);
        }
        match rollout(config, pos, vel) {
            Ok(tracks) => {
                let agents = tracks
                    .into_iter()
                    .enumerate()
                    .map(|(i, gt)| AgentTrack::new(i as i64, AgentType::Particle, gt))
                    .collect();
                return Scene::new(config.dt, agents);
            }
            Err(e @ Error::AgentsCoincident { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::InvalidConfig("scenario resampling exhausted".into())))
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Attach diagonal synthetic covariances to every agent; tracked means equal GT.
pub fn generate_covariances(scene: &Scene, cov_gen: &CovGenConfig, seed: u64) -> Result<Scene> {
    cov_gen.validate()?;
    let mut out = scene.clone();
    for (idx, agent) in out.agents.iter_mut().enumerate() {
        let mut rng = rng_for(seed, 0xC0F + idx as u64);
        let base = Normal::new(cov_gen.base_var_mean, cov_gen.base_var_std)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let bx = base.sample(&mut rng).max(cov_gen.var_min);
        let by = base.sample(&mut rng).max(cov_gen.var_min);
        agent.tracked = agent
            .gt
            .iter()
            .map(|g| {
                let jx: f64 = StandardNormal.sample(&mut rng);
                let jy: f64 = StandardNormal.sample(&mut rng);
                let vx = (bx + jx * cov_gen.step_noise_std).max(cov_gen.var_min);
                let vy = (by + jy * cov_gen.step_noise_std).max(cov_gen.var_min);
                synthetic_state(g, vx, vy)
            })
            .collect();
    }
    Ok(out)
}

/// Tracked state equal to the GT state with a diagonal position covariance.
pub fn synthetic_state(g: &GtState, var_x: f64, var_y: f64) -> TrackedState {
    let mut cov = DMatrix::zeros(4, 4);
    cov[(0, 0)] = var_x;
    cov[(1, 1)] = var_y;
    TrackedState { step: g.step, state: DVector::from_vec(vec![g.pos.x, g.pos.y, g.vel.x, g.vel.y]), cov }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
}

/// Seed of scene `index` in split `split` (0 = train, 1 = val, 2 = test).
pub fn scene_seed(base: u64, split: u64, index: u64) -> u64 {
    derive_seed(derive_seed(base, split + 1), index)
}

pub fn build_split(config: &SimConfig, split: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = scene_seed(config.seed, split, i as u64);
            let scene = simulate_scenario(config, seed)?;
            generate_covariances(&scene, &config.cov_gen, seed)
        })
        .collect()
}

pub fn build_dataset(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    Ok(Dataset {
        train: build_split(config, 0, config.counts.train)?,
        val: build_split(config, 1, config.counts.val)?,
        test: build_split(config, 2, config.counts.test)?,
    })
}
