use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcSpec {
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

/// 1D-CNN layout: a stack of valid (unpadded) convolutions over the feature
/// vector, dropout on the flattened conv output, then fully connected
/// layers. The last FC layer produces the two logits (benign, attack).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArch {
    pub input_length: usize,
    pub conv: Vec<ConvSpec>,
    pub dropout_rate: f64,
    pub fc: Vec<FcSpec>,
}

pub const OUTPUT_DIM: usize = 2;

/// Geometry of one conv layer once input sizes are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_channels: usize,
    pub in_len: usize,
    pub out_channels: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FcGeom {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl ModelArch {
    /// Conv channels (32, 64, 64, 128), kernel 3, stride 1, ReLU; dropout 0.5;
    /// FC widths (128, 2).
    pub fn default_for(input_length: usize) -> Self {
        Self::with_widths(input_length, [32, 64, 64, 128], 128)
    }

    /// Default layout with custom conv channel counts and hidden FC width.
    pub fn with_widths(input_length: usize, channels: [usize; 4], hidden: usize) -> Self {
        let conv = channels
            .iter()
            .map(|&c| ConvSpec {
                out_channels: c,
                kernel_size: 3,
                stride: 1,
                activation: Activation::Relu,
            })
            .collect();
        ModelArch {
            input_length,
            conv,
            dropout_rate: 0.5,
            fc: vec![
                FcSpec {
                    width: hidden,
                    activation: Activation::Relu,
                },
                FcSpec {
                    width: OUTPUT_DIM,
                    activation: Activation::Identity,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().map(|_| ())
    }

    pub(crate) fn geometry(&self) -> Result<(Vec<ConvGeom>, Vec<FcGeom>)> {
        if self.input_length == 0 {
            return Err(Error::Shape("input length must be positive".into()));
        }
        if self.conv.is_empty() {
            return Err(Error::Shape("at least one conv layer is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Shape(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        let mut convs = Vec::with_capacity(self.conv.len());
        let (mut channels, mut len) = (1, self.input_length);
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 || c.kernel_size == 0 || c.stride == 0 {
                return Err(Error::Shape(format!("conv layer {i} has a zero dimension")));
            }
            if c.kernel_size > len {
                return Err(Error::Shape(format!(
                    "conv layer {i}: kernel {} exceeds input length {len}",
                    c.kernel_size
                )));
            }
            let out_len = (len - c.kernel_size) / c.stride + 1;
            convs.push(ConvGeom {
                in_channels: channels,
                in_len: len,
                out_channels: c.out_channels,
                out_len,
                kernel: c.kernel_size,
                stride: c.stride,
                activation: c.activation,
            });
            channels = c.out_channels;
            len = out_len;
        }
        match self.fc.last() {
            Some(last) if last.width == OUTPUT_DIM => {}
            _ => {
                return Err(Error::Shape(format!(
                    "last fully connected layer must have width {OUTPUT_DIM}"
                )))
            }
        }
        let mut fcs = Vec::with_capacity(self.fc.len());
        let mut inputs = channels * len;
        for (i, f) in self.fc.iter().enumerate() {
            if f.width == 0 {
                return Err(Error::Shape(format!("fc layer {i} has zero width")));
            }
            fcs.push(FcGeom {
                inputs,
                outputs: f.width,
                activation: f.activation,
            });
            inputs = f.width;
        }
        Ok((convs, fcs))
    }

    /// Length of the flattened conv output (the dropout layer's width).
    pub fn flattened_len(&self) -> Result<usize> {
        let (convs, _) = self.geometry()?;
        let last = convs.last().expect("validated non-empty");
        Ok(last.out_channels * last.out_len)
    }

    /// Parameter tensor shapes in storage order: for each conv layer
    /// `[out, in, kernel]` then `[out]`; for each FC layer `[out, in]` then
    /// `[out]`.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let (convs, fcs) = self.geometry()?;
        let mut shapes = Vec::with_capacity(2 * (convs.len() + fcs.len()));
        for c in &convs {
            shapes.push(vec![c.out_channels, c.in_channels, c.kernel]);
            shapes.push(vec![c.out_channels]);
        }
        for f in &fcs {
            shapes.push(vec![f.outputs, f.inputs]);
            shapes.push(vec![f.outputs]);
        }
        Ok(shapes)
    }
}
