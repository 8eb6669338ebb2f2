//! Adam with decoupled weight decay, wrapped in Lookahead.
//!
//! Fast weights take an AdamW step every call. Every `lookahead_k` steps the
//! slow copy moves toward the fast weights by `lookahead_alpha` and the fast
//! weights are reset onto it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lookahead_k: u64,
    pub lookahead_alpha: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            lookahead_k: 5,
            lookahead_alpha: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    slow: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Fresh state whose slow weights start at the current parameter values.
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.as_slice().len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.as_slice().len()]).collect(),
            slow: params.iter().map(|p| p.as_slice().to_vec()).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn slow_weights(&self) -> &[Vec<f64>] {
        &self.slow
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }
}

/// One Lookahead(AdamW) update at learning rate `lr`.
pub fn adam_lookahead_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape {
            op: "adam_lookahead_step",
            expected: format!("{} tensors", state.first.len()),
            got: format!("{} params / {} grads", params.len(), grads.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.as_slice().len() != state.first[i].len() {
            return Err(Error::Shape {
                op: "adam_lookahead_step",
                expected: format!("{:?}", p.shape()),
                got: format!("{:?}", g.shape()),
            });
        }
    }
    let cfg = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let sync = cfg.lookahead_k > 0 && state.step.is_multiple_of(cfg.lookahead_k);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for ((w, &gr), (mi, vi)) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *w -= lr * cfg.weight_decay * *w;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gr;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gr * gr;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        if sync {
            for (w, s) in p.as_mut_slice().iter_mut().zip(state.slow[i].iter_mut()) {
                *s += cfg.lookahead_alpha * (*w - *s);
                *w = *s;
            }
        }
    }
    Ok(())
}
