//! Fixed-architecture 1D-CNN detector: forward pass, exact backpropagation,
//! softmax cross-entropy and Adam, all in 64-bit floats.

mod adam;
mod arch;
mod checkpoint;
mod model;
mod params;
mod train;

pub use adam::{adam_step, OptimizerState};
pub use arch::{Activation, ConvSpec, FcSpec, ModelArch, OUTPUT_DIM};
pub use checkpoint::Checkpoint;
pub use model::{forward, label_from_logits, loss, loss_and_grad, predict, predict_batch, Logits, Mode};
pub use params::{init_model, GradientSet, ModelParams, Tensor};
pub use train::{binary_labels, train_epochs, train_epochs_logged, TrainConfig, TrainSummary};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = ModelArch::default_for(78);
        let a = init_model(&arch, 11).unwrap();
        assert_eq!(a, init_model(&arch, 11).unwrap());
        assert_ne!(a, init_model(&arch, 12).unwrap());
        assert_eq!(a.shapes(), arch.param_shapes().unwrap());
        for bias in a.tensors.iter().skip(1).step_by(2) {
            assert!(bias.data.iter().all(|&b| b == 0.0));
        }
        for w in a.tensors.iter().step_by(2) {
            let fan_in: usize = w.shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            assert!(w.data.iter().all(|v| v.abs() <= bound));
        }
    }
}
