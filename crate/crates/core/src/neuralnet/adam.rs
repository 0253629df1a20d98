use serde::{Deserialize, Serialize};

use super::params::{GradientSet, ModelParams};
use super::train::TrainConfig;
use crate::{Error, Result};

/// Adam first/second moments, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn congruent_with(&self, params: &ModelParams) -> bool {
        self.m.len() == params.tensors.len()
            && self.v.len() == params.tensors.len()
            && params
                .tensors
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(t, (m, v))| m.len() == t.len() && v.len() == t.len())
    }

    /// One bias-corrected Adam step applied in place.
    pub fn step_in_place(&mut self, params: &mut ModelParams, grads: &GradientSet, cfg: &TrainConfig) -> Result<()> {
        if !grads.congruent_with(params) || !self.congruent_with(params) {
            return Err(Error::Shape(
                "optimizer state, params and gradients differ in shape".into(),
            ));
        }
        if grads.values().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient passed to Adam".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let correct1 = 1.0 - b1.powi(t);
        let correct2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / correct1;
                let v_hat = v[i] / correct2;
                p.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

/// Functional Adam step: returns updated params and state, inputs untouched.
pub fn adam_step(
    state: &OptimizerState,
    params: &ModelParams,
    grads: &GradientSet,
    cfg: &TrainConfig,
) -> Result<(ModelParams, OptimizerState)> {
    let mut next_params = params.clone();
    let mut next_state = state.clone();
    next_state.step_in_place(&mut next_params, grads, cfg)?;
    Ok((next_params, next_state))
}
