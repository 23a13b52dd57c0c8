use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::error::{Error, Result};

/// Rescales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Params>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sq_norm().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// AdamW moments and step counter for a parameter set of type `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<P> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: P,
    pub v: P,
}

impl<P: Params> OptimizerState<P> {
    pub fn new(config: AdamWConfig, params: &P) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One decoupled-weight-decay Adam update with bias correction:
/// `θ ← θ(1 − lr·wd) − lr · m̂ / (√v̂ + ε)`.
pub fn adamw_step<P: Params>(state: &mut OptimizerState<P>, params: &mut P, grads: &P) -> Result<()> {
    if !params.congruent(grads) || !params.congruent(&state.m) || !params.congruent(&state.v) {
        return Err(Error::InvalidArgument(
            "adamw: parameter, gradient and moment shapes differ".into(),
        ));
    }
    let AdamWConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let decay = 1.0 - lr * weight_decay;

    let g_tensors = grads.tensors();
    let m_tensors = state.m.tensors_mut();
    let v_tensors = state.v.tensors_mut();
    for (((theta, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(g_tensors)
        .zip(m_tensors)
        .zip(v_tensors)
    {
        for i in 0..theta.len() {
            let gi = g.data[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] = theta[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
