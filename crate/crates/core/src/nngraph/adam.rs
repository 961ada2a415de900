//! Adam optimizer with bias-corrected moment estimates.

use super::NetModel;
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults are the usual lr=1e-3, beta1=0.9,
/// beta2=0.999, eps=1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..AdamParams::default()
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update of `model` in place:
///
/// m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
/// p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
pub fn adam_step(
    model: &mut NetModel,
    grads: &[f64],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    let n = model.params().len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::contract(format!(
            "adam: {} params, {} gradients, state sized {}",
            n,
            grads.len(),
            state.m.len()
        )));
    }
    if !grads.iter().all(|g| g.is_finite()) {
        return Err(Error::non_finite("gradient passed to adam"));
    }
    state.t += 1;
    let bc1 = 1.0 - hp.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hp.beta2.powi(state.t as i32);
    let params = model.params_mut();
    for k in 0..n {
        let g = grads[k];
        state.m[k] = hp.beta1 * state.m[k] + (1.0 - hp.beta1) * g;
        state.v[k] = hp.beta2 * state.v[k] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
    if !params.iter().all(|p| p.is_finite()) {
        return Err(Error::non_finite("parameters after adam step"));
    }
    Ok(())
}
