use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort before anything is
/// modified, naming the offending tensor.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    hp: &AdamHyper,
) -> Result<()> {
    let mut bad = None;
    grads.for_each(|name, g| {
        if bad.is_none() && !g.is_finite() {
            bad = Some(name.to_string());
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }

    let n = params.leaves().len();
    if grads.leaves().len() != n || state.m.leaves().len() != n || state.v.leaves().len() != n {
        return Err(Error::contract("optimizer state and gradients do not match the parameter layout"));
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(hp.beta1), T::of(hp.beta2));
    let c1 = T::one() - T::of(hp.beta1.powi(t));
    let c2 = T::one() - T::of(hp.beta2.powi(t));
    let (lr, eps) = (T::of(hp.lr), T::of(hp.eps));

    let leaves = params
        .leaves_mut()
        .into_iter()
        .zip(state.m.leaves_mut())
        .zip(state.v.leaves_mut())
        .zip(grads.leaves());
    for (((p, m), v), g) in leaves {
        for (((p, m), v), &g) in p
            .as_mut_slice()
            .iter_mut()
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
            .zip(g.as_slice())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for g in grads.leaves_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
