//! First-order optimizers over [`ParamVector`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
    },
    /// Decoupled weight decay Adam.
    AdamW {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    RmsProp {
        lr: f64,
        #[serde(default = "default_rms_decay")]
        decay: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.95
}
fn default_eps() -> f64 {
    1e-8
}
fn default_rms_decay() -> f64 {
    0.99
}

impl OptimizerSpec {
    pub fn sgd(lr: f64) -> Self {
        OptimizerSpec::Sgd { lr }
    }

    pub fn adamw(lr: f64) -> Self {
        OptimizerSpec::AdamW {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerSpec::RmsProp {
            lr,
            decay: default_rms_decay(),
            eps: default_eps(),
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerSpec::Sgd { lr } | OptimizerSpec::AdamW { lr, .. } | OptimizerSpec::RmsProp { lr, .. } => lr,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::config(format!("{field}.lr"), "learning rate must be finite and nonnegative"));
        }
        match *self {
            OptimizerSpec::AdamW {
                beta1,
                beta2,
                eps,
                weight_decay,
                ..
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(Error::config(format!("{field}.beta"), "betas must lie in [0, 1)"));
                }
                if eps <= 0.0 || weight_decay < 0.0 {
                    return Err(Error::config(format!("{field}.eps"), "eps must be positive, weight decay nonnegative"));
                }
            }
            OptimizerSpec::RmsProp { decay, eps, .. } => {
                if !(0.0..1.0).contains(&decay) || eps <= 0.0 {
                    return Err(Error::config(format!("{field}.decay"), "decay must lie in [0, 1), eps positive"));
                }
            }
            OptimizerSpec::Sgd { .. } => {}
        }
        Ok(())
    }
}

/// Optimizer state tracking one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub spec: OptimizerSpec,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, dim: usize) -> Self {
        let (m, v) = match spec {
            OptimizerSpec::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerSpec::AdamW { .. } => (vec![0.0; dim], vec![0.0; dim]),
            OptimizerSpec::RmsProp { .. } => (Vec::new(), vec![0.0; dim]),
        };
        Self {
            spec,
            step: 0,
            first_moment: m,
            second_moment: v,
        }
    }

    /// Applies one update. On a non-finite result the parameters and state
    /// are left untouched.
    pub fn step(&mut self, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        grad.check_dim("gradient", params.dim())?;
        if !self.second_moment.is_empty() {
            params.check_dim("parameters", self.second_moment.len())?;
        }
        let p = params.as_slice();
        let g = grad.as_slice();
        let t = self.step + 1;
        let (next, m, v) = match self.spec {
            OptimizerSpec::Sgd { lr } => {
                let next: Vec<f64> = p.iter().zip(g).map(|(p, g)| p - lr * g).collect();
                (next, Vec::new(), Vec::new())
            }
            OptimizerSpec::AdamW {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let mut next = Vec::with_capacity(p.len());
                let mut m = Vec::with_capacity(p.len());
                let mut v = Vec::with_capacity(p.len());
                for i in 0..p.len() {
                    let mi = beta1 * self.first_moment[i] + (1.0 - beta1) * g[i];
                    let vi = beta2 * self.second_moment[i] + (1.0 - beta2) * g[i] * g[i];
                    let decayed = p[i] * (1.0 - lr * weight_decay);
                    next.push(decayed - lr * (mi / bc1) / ((vi / bc2).sqrt() + eps));
                    m.push(mi);
                    v.push(vi);
                }
                (next, m, v)
            }
            OptimizerSpec::RmsProp { lr, decay, eps } => {
                let mut next = Vec::with_capacity(p.len());
                let mut v = Vec::with_capacity(p.len());
                for i in 0..p.len() {
                    let vi = decay * self.second_moment[i] + (1.0 - decay) * g[i] * g[i];
                    next.push(p[i] - lr * g[i] / (vi.sqrt() + eps));
                    v.push(vi);
                }
                (next, Vec::new(), v)
            }
        };
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("optimizer step"));
        }
        *params = ParamVector::new(next);
        if !m.is_empty() {
            self.first_moment = m;
        }
        if !v.is_empty() {
            self.second_moment = v;
        }
        self.step = t;
        Ok(())
    }
}
