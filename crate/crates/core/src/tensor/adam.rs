use super::{Gradient, NetworkParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: NetworkParams,
    second_moment: NetworkParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update in place. A gradient with any
    /// non-finite entry is rejected before anything is modified.
    pub fn update(&mut self, params: &mut NetworkParams, grad: &Gradient) -> Result<()> {
        let g = grad.as_params();
        if !params.same_shape(g) || !params.same_shape(&self.first_moment) {
            return Err(Error::Shape("adam update on incongruent networks".into()));
        }
        if !grad.is_finite() {
            return Err(Error::numeric("adam update (gradient)"));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let correction1 = 1.0 - beta1.powf(t);
        let correction2 = 1.0 - beta2.powf(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g.tensors())
            .zip(self.first_moment.tensors_mut())
            .zip(self.second_moment.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::update`].
pub fn adam_step(
    params: &NetworkParams,
    grad: &Gradient,
    opt: &AdamState,
) -> Result<(NetworkParams, AdamState)> {
    let mut params = params.clone();
    let mut opt = opt.clone();
    opt.update(&mut params, grad)?;
    Ok((params, opt))
}
