use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::model::{loss_and_grad, Mode};
use super::params::ModelParams;
use crate::dataset::Dataset;
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    /// Apply dropout during training.
    pub dropout: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            local_epochs: 1,
            dropout: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidSpec("Adam betas must lie in [0, 1)".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidSpec("Adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub params: ModelParams,
    /// Mean batch loss over all steps; `None` when no step ran.
    pub mean_loss: Option<f64>,
    pub steps: u64,
}

/// Binary targets: 0 benign, 1 any attack class.
pub fn binary_labels(ds: &Dataset) -> Vec<u8> {
    ds.records().iter().map(|r| u8::from(r.is_attack())).collect()
}

/// Shuffled mini-batch Adam for `cfg.local_epochs` epochs, starting from a
/// fresh optimizer state.
pub fn train_epochs(params: &ModelParams, ds: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    train_epochs_logged(params, ds, cfg).map(|s| s.params)
}

pub fn train_epochs_logged(params: &ModelParams, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("cannot train on an empty dataset".into()));
    }
    if ds.feature_count() != params.arch.input_length {
        return Err(Error::Shape(format!(
            "dataset has {} features, model expects {}",
            ds.feature_count(),
            params.arch.input_length
        )));
    }
    let mut current = params.clone();
    if cfg.local_epochs == 0 {
        return Ok(TrainSummary {
            params: current,
            mean_loss: None,
            steps: 0,
        });
    }

    let features: Vec<&[f64]> = ds.records().iter().map(|r| r.features.as_slice()).collect();
    let labels = binary_labels(ds);
    let mode = if cfg.dropout { Mode::Train } else { Mode::Eval };
    let mut state = OptimizerState::new(&current);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut loss_sum = 0.0;

    for epoch in 0..cfg.local_epochs {
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[epoch as u64])));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| features[i]).collect();
            let targets: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let mask_seed = seed::derive(cfg.seed, &[epoch as u64, b as u64, 1]);
            let (loss, grads) = loss_and_grad(&current, &batch, &targets, mode, mask_seed)?;
            state.step_in_place(&mut current, &grads, cfg)?;
            loss_sum += loss;
        }
    }
    Ok(TrainSummary {
        params: current,
        mean_loss: Some(loss_sum / state.step as f64),
        steps: state.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::toy;
    use crate::neuralnet::{init_model, ModelArch};

    #[test]
    fn zero_epochs_is_identity() {
        let ds = toy(&[0, 1, 0, 1], 16);
        let p = init_model(&ModelArch::with_widths(16, [2, 2, 2, 2], 4), 0).unwrap();
        let cfg = TrainConfig {
            local_epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train_epochs(&p, &ds, &cfg).unwrap(), p);
    }

    #[test]
    fn deterministic_and_input_untouched() {
        let ds = toy(&[0, 1, 0, 1, 0, 0, 0, 1], 16);
        let p = init_model(&ModelArch::with_widths(16, [2, 2, 2, 2], 4), 0).unwrap();
        let before = p.clone();
        let cfg = TrainConfig {
            local_epochs: 3,
            batch_size: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_epochs(&p, &ds, &cfg).unwrap();
        let b = train_epochs(&p, &ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(p, before);
        assert_ne!(a, p);
    }

    #[test]
    fn errors() {
        let p = init_model(&ModelArch::with_widths(16, [2, 2, 2, 2], 4), 0).unwrap();
        let empty = toy(&[], 16);
        assert!(train_epochs(&p, &empty, &TrainConfig::default()).is_err());
        let narrow = toy(&[0, 1], 4);
        assert!(matches!(
            train_epochs(&p, &narrow, &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_epochs(&p, &toy(&[0, 1], 16), &cfg).is_err());
    }
}
