//! Bias-corrected Adam over named parameter groups.

use super::Parameter;
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct ParamGroup {
    pub name: String,
    pub lr: f64,
    pub params: Vec<Parameter>,
}

struct MomentState {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct Adam {
    config: AdamConfig,
    groups: Vec<ParamGroup>,
    state: HashMap<String, MomentState>,
    step_count: u64,
}

impl Adam {
    pub fn new(groups: Vec<ParamGroup>, config: AdamConfig) -> Result<Adam> {
        let mut seen = std::collections::HashSet::new();
        for group in &groups {
            if group.lr <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "learning rate for group '{}' must be > 0",
                    group.name
                )));
            }
            for p in &group.params {
                if !seen.insert(p.name.clone()) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate parameter name '{}'",
                        p.name
                    )));
                }
            }
        }
        let state = groups
            .iter()
            .flat_map(|g| &g.params)
            .map(|p| {
                let n = p.tensor.numel();
                (
                    p.name.clone(),
                    MomentState {
                        m: vec![0.0; n],
                        v: vec![0.0; n],
                    },
                )
            })
            .collect();
        Ok(Adam {
            config,
            groups,
            state,
            step_count: 0,
        })
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    /// Total trainable element count across all groups.
    pub fn param_count(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| &g.params)
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters, then clears them.
    pub fn step(&mut self) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for group in &self.groups {
            for param in &group.params {
                let grad = param.tensor.grad().unwrap_or_else(|| vec![0.0; param.tensor.numel()]);
                let state = self.state.get_mut(&param.name).expect("state exists");
                let mut data = param.tensor.value();
                for i in 0..data.len() {
                    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
                    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = state.m[i] / bc1;
                    let v_hat = state.v[i] / bc2;
                    data[i] -= group.lr * m_hat / (v_hat.sqrt() + eps);
                }
                param.tensor.set_data(data);
                param.tensor.zero_grad();
            }
        }
    }

    pub fn zero_grad(&self) {
        for group in &self.groups {
            for param in &group.params {
                param.tensor.zero_grad();
            }
        }
    }
}
