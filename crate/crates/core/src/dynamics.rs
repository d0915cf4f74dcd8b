//! Agent dynamics: single integrator, double integrator and kinematic bicycle.
//!
//! All models take two-dimensional controls. The integrators are discretized exactly
//! (zero-order hold on the control); the bicycle uses a forward-Euler step.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian2, Gmm2};
use crate::linalg::{regularize2, symmetrize, wrap_angle, Mat2, Vec2};
use crate::scene::AgentType;

/// Wheelbase used for every vehicle (m).
pub const BICYCLE_WHEELBASE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    SingleIntegrator,
    DoubleIntegrator,
    Bicycle,
}

impl DynamicsKind {
    pub fn name(&self) -> &'static str {
        match self {
            DynamicsKind::SingleIntegrator => "single_integrator",
            DynamicsKind::DoubleIntegrator => "double_integrator",
            DynamicsKind::Bicycle => "bicycle",
        }
    }

    pub fn for_agent(agent_type: AgentType) -> Self {
        match agent_type {
            AgentType::Particle => DynamicsKind::DoubleIntegrator,
            AgentType::Pedestrian => DynamicsKind::SingleIntegrator,
            AgentType::Vehicle => DynamicsKind::Bicycle,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsKind::SingleIntegrator => 2,
            DynamicsKind::DoubleIntegrator | DynamicsKind::Bicycle => 4,
        }
    }

    pub fn build(&self, dt: f64) -> Result<Arc<dyn Dynamics>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        Ok(match self {
            DynamicsKind::SingleIntegrator => Arc::new(SingleIntegrator { dt }),
            DynamicsKind::DoubleIntegrator => Arc::new(DoubleIntegrator { dt }),
            DynamicsKind::Bicycle => Arc::new(Bicycle { dt, wheelbase: BICYCLE_WHEELBASE }),
        })
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_integrator" => Ok(DynamicsKind::SingleIntegrator),
            "double_integrator" => Ok(DynamicsKind::DoubleIntegrator),
            "bicycle" => Ok(DynamicsKind::Bicycle),
            _ => Err(Error::UnknownName { kind: "dynamics model", name: s.to_string() }),
        }
    }
}

pub trait Dynamics: Send + Sync {
    fn kind(&self) -> DynamicsKind;

    fn dt(&self) -> f64;

    fn state_dim(&self) -> usize {
        self.kind().state_dim()
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn is_linear(&self) -> bool {
        self.kind() != DynamicsKind::Bicycle
    }

    fn step_mean(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<DVector<f64>>;

    /// `(∂f/∂state, ∂f/∂control)` at the given point.
    fn jacobians(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>;

    fn check_dims(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch { expected: self.state_dim(), got: state.len() });
        }
        if control.len() != self.control_dim() {
            return Err(Error::DimensionMismatch { expected: self.control_dim(), got: control.len() });
        }
        Ok(())
    }
}

/// State `[x, y]`, control `[vx, vy]`.
#[derive(Debug, Clone, Copy)]
pub struct SingleIntegrator {
    pub dt: f64,
}

impl Dynamics for SingleIntegrator {
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::SingleIntegrator
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn step_mean(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(state, control)?;
        Ok(state + control * self.dt)
    }

    fn jacobians(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_dims(state, control)?;
        Ok((DMatrix::identity(2, 2), DMatrix::identity(2, 2) * self.dt))
    }
}

/// State `[x, y, vx, vy]`, control `[ax, ay]`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegrator {
    pub dt: f64,
}

impl Dynamics for DoubleIntegrator {
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::DoubleIntegrator
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn step_mean(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<DVector<f64>> {
        let (a, b) = self.jacobians(state, control)?;
        Ok(a * state + b * control)
    }

    fn jacobians(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_dims(state, control)?;
        let dt = self.dt;
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        let mut b = DMatrix::zeros(4, 2);
        b[(0, 0)] = 0.5 * dt * dt;
        b[(1, 1)] = 0.5 * dt * dt;
        b[(2, 0)] = dt;
        b[(3, 1)] = dt;
        Ok((a, b))
    }
}

/// Kinematic bicycle: state `[x, y, θ, v]`, control `[a, δ]` with steering angle `δ`.
#[derive(Debug, Clone, Copy)]
pub struct Bicycle {
    pub dt: f64,
    pub wheelbase: f64,
}

impl Dynamics for Bicycle {
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::Bicycle
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn step_mean(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(state, control)?;
        let (x, y, th, v) = (state[0], state[1], state[2], state[3]);
        let (acc, steer) = (control[0], control[1]);
        let dt = self.dt;
        Ok(DVector::from_vec(vec![
            x + dt * v * th.cos(),
            y + dt * v * th.sin(),
            wrap_angle(th + dt * v * steer.tan() / self.wheelbase),
            v + dt * acc,
        ]))
    }

    fn jacobians(&self, state: &DVector<f64>, control: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_dims(state, control)?;
        let (th, v) = (state[2], state[3]);
        let steer = control[1];
        let dt = self.dt;
        let l = self.wheelbase;
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = -dt * v * th.sin();
        a[(0, 3)] = dt * th.cos();
        a[(1, 2)] = dt * v * th.cos();
        a[(1, 3)] = dt * th.sin();
        a[(2, 3)] = dt * steer.tan() / l;
        let mut b = DMatrix::zeros(4, 2);
        b[(2, 1)] = dt * v / (l * steer.cos().powi(2));
        b[(3, 0)] = dt;
        Ok((a, b))
    }
}

/// Named constructors for dynamics models.
pub struct DynamicsRegistry {
    entries: BTreeMap<&'static str, DynamicsKind>,
}

impl DynamicsRegistry {
    pub fn with_builtins() -> Self {
        let entries = [DynamicsKind::SingleIntegrator, DynamicsKind::DoubleIntegrator, DynamicsKind::Bicycle]
            .into_iter()
            .map(|k| (k.name(), k))
            .collect();
        Self { entries }
    }

    pub fn build(&self, name: &str, dt: f64) -> Result<Arc<dyn Dynamics>> {
        let kind = self
            .entries
            .get(name)
            .ok_or_else(|| Error::UnknownName { kind: "dynamics model", name: name.to_string() })?;
        kind.build(dt)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// Per-mode result of pushing a control mixture through one dynamics step.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl Propagation {
    pub fn position_mean(&self, k: usize) -> Vec2 {
        Vec2::new(self.means[k][0], self.means[k][1])
    }

    pub fn position_cov(&self, k: usize) -> Mat2 {
        let c = &self.covs[k];
        Mat2::new(c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)])
    }

    /// Position marginals as a mixture, with regularized covariances.
    pub fn position_gmm(&self) -> Result<Gmm2> {
        let comps = (0..self.weights.len())
            .map(|k| Gaussian2::new(self.position_mean(k), regularize2(&self.position_cov(k))))
            .collect::<Result<Vec<_>>>()?;
        Gmm2::new(self.weights.clone(), comps)
    }
}

/// `cov_k = A·P·Aᵀ + B·Σ_{u,k}·Bᵀ` per control mode, linearized at that mode's mean control.
pub fn propagate_uncertainty(
    model: &dyn Dynamics,
    state: &DVector<f64>,
    state_cov: &DMatrix<f64>,
    controls: &Gmm2,
) -> Result<Propagation> {
    let n = model.state_dim();
    if state_cov.nrows() != n || state_cov.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: state_cov.nrows() });
    }
    let mut means = Vec::with_capacity(controls.len());
    let mut covs = Vec::with_capacity(controls.len());
    for (_, c) in controls.iter() {
        let u = DVector::from_column_slice(c.mean.as_slice());
        let (a, b) = model.jacobians(state, &u)?;
        let sigma_u = DMatrix::from_column_slice(2, 2, c.cov.as_slice());
        let cov = symmetrize(&(&a * state_cov * a.transpose() + &b * sigma_u * b.transpose()));
        means.push(model.step_mean(state, &u)?);
        covs.push(cov);
    }
    Ok(Propagation { weights: controls.weights().to_vec(), means, covs })
}
