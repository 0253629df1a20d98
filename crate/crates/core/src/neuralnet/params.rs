use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Activation, ModelArch};
use crate::{seed, Error, Result};

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Every weight and bias of one model, in [`ModelArch::param_shapes`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: ModelArch,
    pub tensors: Vec<Tensor>,
}

/// Gradients shaped like the [`ModelParams`] they belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// All-zero parameters for `arch`.
    pub fn zeros(arch: &ModelArch) -> Result<Self> {
        let tensors = arch.param_shapes()?.iter().map(|s| Tensor::zeros(s)).collect();
        Ok(ModelParams {
            arch: arch.clone(),
            tensors,
        })
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    /// Checks that tensors match the declared architecture and are finite.
    pub fn validate(&self) -> Result<()> {
        let expected = self.arch.param_shapes()?;
        if expected != self.shapes() {
            return Err(Error::Shape("parameter tensors do not match the architecture".into()));
        }
        for t in &self.tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "tensor data length differs from shape {:?}",
                    t.shape
                )));
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.arch == other.arch && self.shapes() == other.shapes()
    }
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradientSet {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn congruent_with(&self, params: &ModelParams) -> bool {
        self.tensors.len() == params.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&params.tensors)
                .all(|(g, p)| g.shape == p.shape && g.data.len() == p.data.len())
    }
}

/// Fan-in scaled uniform weights, zero biases. ReLU layers use the bound
/// `sqrt(6 / fan_in)`, linear layers `sqrt(3 / fan_in)`.
pub fn init_model(arch: &ModelArch, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let activations: Vec<Activation> = arch
        .conv
        .iter()
        .map(|c| c.activation)
        .chain(arch.fc.iter().map(|f| f.activation))
        .collect();
    let mut rng = seed::rng(seed);
    for (layer, pair) in params.tensors.chunks_mut(2).enumerate() {
        let weight = &mut pair[0];
        let fan_in: usize = weight.shape[1..].iter().product();
        let gain = match activations[layer] {
            Activation::Relu => 6.0,
            Activation::Identity => 3.0,
        };
        let bound = (gain / fan_in as f64).sqrt();
        for w in &mut weight.data {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}
