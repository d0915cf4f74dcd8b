//! Kalman-family trackers that turn GT positions into `(ŝ, Σ̂)` tracks.
//!
//! Measurements are positions only (`H = [I₂ 0]`). Linear models use the plain Kalman
//! filter; the bicycle uses an EKF linearized with zero nominal control.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Bicycle, Dynamics, DynamicsKind, BICYCLE_WHEELBASE};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, wrap_angle, Vec2, EPS_PD};
use crate::rng::rng_for;
use crate::scene::{AgentType, Scene, TrackedState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Per-state-dimension process noise standard deviations.
    pub process_noise_std: Vec<f64>,
    /// Position measurement noise standard deviation (m).
    pub meas_noise_std: f64,
    /// Initial covariance rows; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_cov: Option<Vec<Vec<f64>>>,
}

impl FilterConfig {
    /// Constant-velocity model `[x, y, vx, vy]` driven by white acceleration noise.
    pub fn constant_velocity(dt: f64, accel_std: f64, meas_noise_std: f64) -> Self {
        let p = accel_std * 0.5 * dt * dt;
        let v = accel_std * dt;
        Self { process_noise_std: vec![p, p, v, v], meas_noise_std, init_cov: None }
    }

    /// Bicycle state `[x, y, θ, v]` with acceleration and yaw-rate noise.
    pub fn bicycle(dt: f64, accel_std: f64, yaw_rate_std: f64, meas_noise_std: f64) -> Self {
        let p = accel_std * 0.5 * dt * dt;
        Self { process_noise_std: vec![p, p, yaw_rate_std * dt, accel_std * dt], meas_noise_std, init_cov: None }
    }

    pub fn default_for(agent_type: AgentType, dt: f64) -> Self {
        match agent_type {
            AgentType::Particle | AgentType::Pedestrian => Self::constant_velocity(dt, 0.5, 0.1),
            AgentType::Vehicle => Self::bicycle(dt, 0.5, 0.2, 0.1),
        }
    }

    pub fn dim(&self) -> usize {
        self.process_noise_std.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.process_noise_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("process_noise_std entries must be positive".into()));
        }
        if !(self.meas_noise_std > 0.0) {
            return Err(Error::InvalidConfig("meas_noise_std must be positive".into()));
        }
        if let Some(rows) = &self.init_cov {
            let m = self.initial_cov()?;
            if rows.len() != self.dim() || m.clone().cholesky().is_none() {
                return Err(Error::InvalidConfig("init_cov must be a positive-definite D×D matrix".into()));
            }
        }
        Ok(())
    }

    pub fn process_noise(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(self.dim(), self.process_noise_std.iter().map(|s| s * s)))
    }

    pub fn initial_cov(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        match &self.init_cov {
            None => Ok(DMatrix::identity(n, n)),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch { expected: n, got: rows.len() });
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateResult {
    pub state: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub innovation: Vec2,
}

/// `(A·x, A·P·Aᵀ + Q)` with `A` the model Jacobian at zero control.
pub fn kf_predict(
    state: &DVector<f64>,
    cov: &DMatrix<f64>,
    model: &dyn Dynamics,
    config: &FilterConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = model.state_dim();
    if state.len() != n || cov.nrows() != n || config.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: state.len().max(config.dim()) });
    }
    let u = DVector::zeros(model.control_dim());
    let (a, _) = model.jacobians(state, &u)?;
    let mut mean = model.step_mean(state, &u)?;
    if model.kind() == DynamicsKind::Bicycle {
        mean[2] = wrap_angle(mean[2]);
    }
    let cov = symmetrize(&(&a * cov * a.transpose() + config.process_noise()));
    Ok((mean, cov))
}

/// Position-measurement Kalman update in Joseph form.
pub fn kf_update(
    state: &DVector<f64>,
    cov: &DMatrix<f64>,
    measurement: &Vec2,
    config: &FilterConfig,
) -> Result<UpdateResult> {
    let n = state.len();
    if cov.nrows() != n || n < 2 {
        return Err(Error::DimensionMismatch { expected: n, got: cov.nrows() });
    }
    let mut h = DMatrix::zeros(2, n);
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    let r = DMatrix::identity(2, 2) * config.meas_noise_std.powi(2);
    let innovation = Vec2::new(measurement.x - state[0], measurement.y - state[1]);
    let s = &h * cov * h.transpose() + &r;
    let det = s.determinant();
    // Relative test so that tiny but well-conditioned innovations pass.
    let scale = 0.5 * s.trace();
    if !(scale > 0.0 && det > EPS_PD * scale * scale) {
        return Err(Error::SingularInnovationCovariance { det });
    }
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovationCovariance { det })?;
    let k = cov * h.transpose() * s_inv;
    let nu = DVector::from_column_slice(innovation.as_slice());
    let new_state = state + &k * nu;
    let i_kh = DMatrix::identity(n, n) - &k * &h;
    let new_cov = symmetrize(&(&i_kh * cov * i_kh.transpose() + &k * r * k.transpose()));
    Ok(UpdateResult { state: new_state, cov: new_cov, innovation })
}

/// One EKF predict/update cycle for the bicycle model.
pub fn ekf_step(
    state: &DVector<f64>,
    cov: &DMatrix<f64>,
    measurement: &Vec2,
    model: &Bicycle,
    config: &FilterConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (pred, pred_cov) = kf_predict(state, cov, model, config)?;
    let mut upd = kf_update(&pred, &pred_cov, measurement, config)?;
    upd.state[2] = wrap_angle(upd.state[2]);
    Ok((upd.state, upd.cov))
}

/// A filter strategy: initialize from a first measurement, then predict/update.
pub trait Tracker: Send + Sync {
    fn name(&self) -> &'static str;

    fn config(&self) -> &FilterConfig;

    fn initialize(&self, measurement: &Vec2) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut s = DVector::zeros(self.config().dim());
        s[0] = measurement.x;
        s[1] = measurement.y;
        Ok((s, self.config().initial_cov()?))
    }

    fn step(&self, state: &DVector<f64>, cov: &DMatrix<f64>, measurement: &Vec2) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

pub struct LinearKalman {
    model: Box<dyn Dynamics>,
    config: FilterConfig,
}

impl LinearKalman {
    pub fn new(model: Box<dyn Dynamics>, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        if !model.is_linear() {
            return Err(Error::InvalidConfig(format!("{} is not a linear model", model.kind())));
        }
        if config.dim() != model.state_dim() {
            return Err(Error::DimensionMismatch { expected: model.state_dim(), got: config.dim() });
        }
        Ok(Self { model, config })
    }
}

impl Tracker for LinearKalman {
    fn name(&self) -> &'static str {
        "kf"
    }

    fn config(&self) -> &FilterConfig {
        &self.config
    }

    fn step(&self, state: &DVector<f64>, cov: &DMatrix<f64>, z: &Vec2) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (p, pc) = kf_predict(state, cov, self.model.as_ref(), &self.config)?;
        let u = kf_update(&p, &pc, z, &self.config)?;
        Ok((u.state, u.cov))
    }
}

pub struct ExtendedKalman {
    model: Bicycle,
    config: FilterConfig,
}

impl ExtendedKalman {
    pub fn new(model: Bicycle, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        if config.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: config.dim() });
        }
        Ok(Self { model, config })
    }
}

impl Tracker for ExtendedKalman {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn config(&self) -> &FilterConfig {
        &self.config
    }

    fn step(&self, state: &DVector<f64>, cov: &DMatrix<f64>, z: &Vec2) -> Result<(DVector<f64>, DMatrix<f64>)> {
        ekf_step(state, cov, z, &self.model, &self.config)
    }
}

/// Filter configuration per agent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub filters: BTreeMap<AgentType, FilterConfig>,
}

impl TrackingConfig {
    pub fn defaults(dt: f64) -> Self {
        Self { filters: AgentType::ALL.into_iter().map(|t| (t, FilterConfig::default_for(t, dt))).collect() }
    }

    pub fn tracker_for(&self, agent_type: AgentType, dt: f64) -> Result<Box<dyn Tracker>> {
        let config = self
            .filters
            .get(&agent_type)
            .cloned()
            .unwrap_or_else(|| FilterConfig::default_for(agent_type, dt));
        Ok(match agent_type {
            AgentType::Particle | AgentType::Pedestrian => {
                Box::new(LinearKalman::new(Box::new(crate::dynamics::DoubleIntegrator { dt }), config)?)
            }
            AgentType::Vehicle => {
                Box::new(ExtendedKalman::new(Bicycle { dt, wheelbase: BICYCLE_WHEELBASE }, config)?)
            }
        })
    }
}

/// Run a tracker over every agent's GT positions corrupted by measurement noise.
///
/// The first step records the initialization (first measurement, initial covariance);
/// every later step is a predict/update cycle.
pub fn track_scene(scene: &Scene, config: &TrackingConfig, seed: u64) -> Result<Scene> {
    let tracked: Vec<Vec<TrackedState>> = scene
        .agents
        .par_iter()
        .enumerate()
        .map(|(idx, agent)| {
            let tracker = config.tracker_for(agent.agent_type, scene.dt)?;
            let std = tracker.config().meas_noise_std;
            let mut rng = rng_for(seed, idx as u64);
            let mut out = Vec::with_capacity(agent.gt.len());
            let mut current: Option<(DVector<f64>, DMatrix<f64>)> = None;
            for gt in &agent.gt {
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                let z = gt.pos + Vec2::new(nx, ny) * std;
                let next = match &current {
                    None => tracker.initialize(&z)?,
                    Some((s, c)) => tracker.step(s, c, &z)?,
                };
                out.push(TrackedState { step: gt.step, state: next.0.clone(), cov: next.1.clone() });
                current = Some(next);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut scene = scene.clone();
    for (agent, t) in scene.agents.iter_mut().zip(tracked) {
        agent.tracked = t;
    }
    Ok(scene)
}

/// Root-mean-square position error of tracked states against GT over steps `>= burn_in`.
pub fn position_rmse(scene: &Scene, burn_in: usize) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for a in &scene.agents {
        for (t, g) in a.tracked.iter().zip(&a.gt).skip(burn_in) {
            acc += (t.position() - g.pos).norm_squared();
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    (acc / n as f64).sqrt()
}
