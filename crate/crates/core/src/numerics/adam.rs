use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per registered parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(registry: &ParamRegistry, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = registry.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Gradients are zeroed afterwards.
pub fn adam_step(registry: &mut ParamRegistry, state: &mut AdamState) -> Result<(), NumericsError> {
    if state.m.len() != registry.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "adam_step",
            left: (state.m.len(), 1),
            right: (registry.len(), 1),
        });
    }
    for id in registry.ids() {
        if registry.tensor(id).grad().is_none() {
            return Err(NumericsError::MissingGradient(registry.name(id).to_string()));
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for id in registry.ids().collect::<Vec<_>>() {
        let tensor = registry.tensor_mut(id);
        let grad = tensor.grad().expect("checked above").to_vec();
        let m = &mut state.m[id.0];
        let v = &mut state.v[id.0];
        for (i, value) in tensor.data_mut().iter_mut().enumerate() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *value -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        tensor.zero_grad();
    }
    Ok(())
}
