//! The CVAE forecaster: history and edge encoders, latent heads, and a GRU
//! control decoder integrated through the agent's dynamics.
//!
//! Batches are laid out mode-major inside each window: decoder row `b·K + k`
//! is window `b` under latent class `k`, so all `K` modes decode in one pass.

use rand::Rng;
use serde::{Deserialize, Serialize};
use utraj_autodiff::nodes::cov_from_params;
use utraj_autodiff::{GruCell, LstmCell, ParamId, ParamStore, Tape, Tensor, Var};
use utraj_core::rng::rng_for;
use utraj_core::{Gaussian2, Mat2, Vec2};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::features::{Window, EDGE_DIM, FUTURE_DIM, NODE_DIM};
use crate::rollout::{rollout_for, Rollout};

/// Decoder output per step: control mean (2) and `(log σ, log σ, ρ_raw)`.
const CONTROL_PARAMS: usize = 5;

#[derive(Debug, Clone)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            w: store.add(format!("{name}.w"), Tensor::zeros(&[input, output]))?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[output]))?,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        Ok(tape.add_bias(xw, b)?)
    }
}

/// Tensors for one minibatch of windows.
pub struct Batch {
    pub size: usize,
    pub hist: Vec<Tensor>,
    pub edges: Vec<Tensor>,
    pub future: Vec<Tensor>,
    pub init_state: Tensor,
    /// Per future step, one target per decoder row (`b·K + k`).
    pub targets: Vec<Vec<Vec2>>,
    pub target_dists: Vec<Vec<Gaussian2>>,
}

impl Batch {
    pub fn new(windows: &[&Window], config: &ModelConfig) -> Result<Self> {
        let b = windows.len();
        let k = config.latent_size;
        let per_step = |dim: usize, steps: usize, get: &dyn Fn(&Window) -> &[f64]| -> Result<Vec<Tensor>> {
            (0..steps)
                .map(|s| {
                    let mut data = Vec::with_capacity(b * dim);
                    for w in windows {
                        data.extend_from_slice(&get(w)[s * dim..(s + 1) * dim]);
                    }
                    Ok(Tensor::matrix(b, dim, data)?)
                })
                .collect()
        };
        let hist = per_step(NODE_DIM, config.history_len, &|w| &w.hist)?;
        let edges = per_step(EDGE_DIM, config.history_len, &|w| &w.edges)?;
        let future = per_step(FUTURE_DIM, config.horizon, &|w| &w.future)?;
        let n = config.dynamics().state_dim();
        let init_state = Tensor::matrix(b, n, windows.iter().flat_map(|w| w.init_state.iter().copied()).collect())?;
        let mut targets = Vec::with_capacity(config.horizon);
        let mut target_dists = Vec::with_capacity(config.horizon);
        for t in 0..config.horizon {
            let mut ys = Vec::with_capacity(b * k);
            let mut ds = Vec::with_capacity(b * k);
            for w in windows {
                let g = Gaussian2 { mean: w.targets[t], cov: w.target_covs[t] };
                for _ in 0..k {
                    ys.push(w.targets[t]);
                    ds.push(g);
                }
            }
            targets.push(ys);
            target_dists.push(ds);
        }
        Ok(Self { size: b, hist, edges, future, init_state, targets, target_dists })
    }
}

/// Per-step position marginals of every decoder row.
pub struct Decoded {
    pub pos_means: Vec<Var>,
    pub pos_covs: Vec<Var>,
}

/// Checkpoint contents: the configuration echo, the step length, and the weights.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    config: ModelConfig,
    dt: f64,
    params: serde_json::Value,
}

pub struct Forecaster {
    pub config: ModelConfig,
    pub dt: f64,
    pub store: ParamStore,
    hist: LstmCell,
    edge: LstmCell,
    p_head: Linear,
    q_fwd: LstmCell,
    q_bwd: LstmCell,
    q_head: Linear,
    dec_init: Linear,
    dec: GruCell,
    dec_out: Linear,
    rollout: Box<dyn Rollout>,
}

impl Forecaster {
    /// Build with weights drawn uniformly in `±1/√fan_in` (biases zero, LSTM forget biases one).
    pub fn new(config: ModelConfig, dt: f64, seed: u64) -> Result<Self> {
        let mut f = Self::zeroed(config, dt)?;
        let mut rng = rng_for(seed, 0x1417);
        let ids: Vec<(ParamId, String)> = f.store.iter().map(|(id, n, _)| (id, n.to_string())).collect();
        for (id, _) in &ids {
            let t = f.store.get_mut(*id);
            if t.shape().len() == 2 {
                let bound = 1.0 / (t.shape()[0] as f64).sqrt();
                for x in t.data_mut() {
                    *x = rng.random_range(-bound..bound);
                }
            }
        }
        for cell in [&f.hist, &f.edge, &f.q_fwd, &f.q_bwd] {
            let h = cell.hidden;
            f.store.get_mut(cell.bias_id()).data_mut()[h..2 * h].fill(1.0);
        }
        Ok(f)
    }

    fn zeroed(config: ModelConfig, dt: f64) -> Result<Self> {
        config.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        let c = &config;
        let e = c.hist_hidden + c.edge_hidden;
        let k = c.latent_size;
        let mut store = ParamStore::new();
        let hist = LstmCell::new(&mut store, "hist", NODE_DIM, c.hist_hidden)?;
        let edge = LstmCell::new(&mut store, "edge", EDGE_DIM, c.edge_hidden)?;
        let p_head = Linear::new(&mut store, "p_head", e, k)?;
        let q_fwd = LstmCell::new(&mut store, "q_fwd", FUTURE_DIM, c.q_hidden)?;
        let q_bwd = LstmCell::new(&mut store, "q_bwd", FUTURE_DIM, c.q_hidden)?;
        let q_head = Linear::new(&mut store, "q_head", e + 2 * c.q_hidden, k)?;
        let dec_init = Linear::new(&mut store, "dec_init", e + k, c.dec_hidden)?;
        let dec = GruCell::new(&mut store, "dec", e + k, c.dec_hidden)?;
        let dec_out = Linear::new(&mut store, "dec_out", c.dec_hidden, CONTROL_PARAMS)?;
        let rollout = rollout_for(c.dynamics(), dt)?;
        Ok(Self { config, dt, store, hist, edge, p_head, q_fwd, q_bwd, q_head, dec_init, dec, dec_out, rollout })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            config: self.config.clone(),
            dt: self.dt,
            params: serde_json::from_str(&self.store.to_json()?)?,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut f = Self::zeroed(file.config, file.dt)?;
        f.store.load_json(&file.params.to_string())?;
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Node representation `e_x = [history encoding, edge encoding]`, `[B, hist + edge]`.
    pub fn encode(&self, tape: &mut Tape, batch: &Batch) -> Result<Var> {
        let hs: Vec<Var> = batch.hist.iter().map(|t| tape.constant(t.clone())).collect();
        let es: Vec<Var> = batch.edges.iter().map(|t| tape.constant(t.clone())).collect();
        let h = self.hist.run(tape, &self.store, &hs, batch.size)?;
        let e = self.edge.run(tape, &self.store, &es, batch.size)?;
        Ok(tape.concat(&[h, e], 1)?)
    }

    /// Prior logits `[B, K]`.
    pub fn prior_logits(&self, tape: &mut Tape, ex: Var) -> Result<Var> {
        self.p_head.forward(tape, &self.store, ex)
    }

    /// Posterior logits `[B, K]` from `e_x` and a bidirectional pass over the GT future.
    pub fn posterior_logits(&self, tape: &mut Tape, ex: Var, batch: &Batch) -> Result<Var> {
        let fs: Vec<Var> = batch.future.iter().map(|t| tape.constant(t.clone())).collect();
        let fwd = self.q_fwd.run(tape, &self.store, &fs, batch.size)?;
        let rev: Vec<Var> = fs.iter().rev().copied().collect();
        let bwd = self.q_bwd.run(tape, &self.store, &rev, batch.size)?;
        let x = tape.concat(&[ex, fwd, bwd], 1)?;
        self.q_head.forward(tape, &self.store, x)
    }

    /// Decode all `K` modes of every window.
    pub fn decode(&self, tape: &mut Tape, ex: Var, batch: &Batch) -> Result<Decoded> {
        let (b, k) = (batch.size, self.config.latent_size);
        let expand = Tensor::from_fn(&[b * k, b], |i| if (i / b) / k == i % b { 1.0 } else { 0.0 });
        let onehot = Tensor::from_fn(&[b * k, k], |i| if (i / k) % k == i % k { 1.0 } else { 0.0 });
        let expand = tape.constant(expand);
        let z = tape.constant(onehot);
        let ex_rows = tape.matmul(expand, ex)?;
        let x = tape.concat(&[ex_rows, z], 1)?;
        let h0 = self.dec_init.forward(tape, &self.store, x)?;
        let mut h = tape.tanh(h0);
        let xp = self.dec.project_input(tape, &self.store, x)?;

        let n = self.rollout.state_dim();
        let init = Tensor::from_fn(&[b * k, n], |i| batch.init_state.data()[(i / n) / k * n + i % n]);
        let mut s = tape.constant(init);
        let mut p: Option<Var> = None;
        let mut pos_means = Vec::with_capacity(self.config.horizon);
        let mut pos_covs = Vec::with_capacity(self.config.horizon);
        for _ in 0..self.config.horizon {
            h = self.dec.step_projected(tape, &self.store, xp, h)?;
            let out = self.dec_out.forward(tape, &self.store, h)?;
            let u = tape.slice(out, 1, 0, 2)?;
            let cp = tape.slice(out, 1, 2, 3)?;
            let su = cov_from_params(tape, cp)?;
            let (s2, p2) = self.rollout.step(tape, s, p, u, su)?;
            s = s2;
            p = Some(p2);
            pos_means.push(self.rollout.position_mean(tape, s)?);
            pos_covs.push(self.rollout.position_cov(tape, p2)?);
        }
        Ok(Decoded { pos_means, pos_covs })
    }
}

/// Read row `r` of `[N, 2]` means and `[N, 4]` covariances as a Gaussian.
pub fn row_gaussian(means: &Tensor, covs: &Tensor, r: usize, offset: Vec2) -> Gaussian2 {
    let m = &means.data()[2 * r..2 * r + 2];
    let c = &covs.data()[4 * r..4 * r + 4];
    let sym = 0.5 * (c[1] + c[2]);
    Gaussian2 { mean: Vec2::new(m[0], m[1]) + offset, cov: Mat2::new(c[0], sym, sym, c[3]) }
}
