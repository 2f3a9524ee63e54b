//! Lazy Adam over sparse block gradients.
//!
//! Only blocks present in the gradient are updated; their moment estimates
//! decay and absorb the new gradient as in dense Adam, with bias
//! correction from the global step count. Untouched blocks keep both their
//! parameters and their moments.

use crate::error::{Error, Result};
use crate::model::{Gradients, Params};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Params,
    pub second: Params,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        AdamState {
            first: Params::zeros_like(params),
            second: Params::zeros_like(params),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }
}

/// One bias-corrected Adam update of the blocks in `grads`.
pub fn adam_step(params: &mut Params, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    for (block, g) in grads.iter() {
        if params.block(block).len() != g.len() {
            return Err(Error::DimensionMismatch {
                what: format!("gradient block {block:?}"),
                expected: params.block(block).len(),
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient block {block:?}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (block, g) in grads.iter() {
        let m = state.first.block_mut(block);
        for (m, g) in m.iter_mut().zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
        }
        let v = state.second.block_mut(block);
        for (v, g) in v.iter_mut().zip(g) {
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let m = state.first.block(block);
        let v = state.second.block(block);
        let p = params.block_mut(block);
        for ((p, m), v) in p.iter_mut().zip(m).zip(v) {
            let m_hat = m / c1;
            let v_hat = v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameters of {block:?} after update")));
        }
    }
    Ok(())
}
