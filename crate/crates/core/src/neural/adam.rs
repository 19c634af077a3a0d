use serde::{Deserialize, Serialize};

use super::model::{FcnModel, ModelGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one flat vector in canonical
/// parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &FcnModel, config: AdamConfig) -> Self {
        let n = model.param_count();
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter, in canonical order.
pub fn adam_step(model: &mut FcnModel, grads: &ModelGrads, state: &mut AdamState) -> Result<()> {
    let n = model.param_count();
    let shapes_match = grads.layers.len() == model.layers.len()
        && grads
            .layers
            .iter()
            .zip(&model.layers)
            .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len());
    if !shapes_match || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape("adam state, gradients and model disagree".into()));
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    let flat_grads = grads
        .layers
        .iter()
        .flat_map(|g| g.weights.iter().chain(&g.biases));
    for (((p, &g), m), v) in model
        .params_mut()
        .zip(flat_grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}
