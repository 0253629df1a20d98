use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ConvGeom, FcGeom, OUTPUT_DIM};
use super::params::{GradientSet, ModelParams};
use crate::dataset::ClassId;
use crate::{seed, Error, Result};

pub type Logits = [f64; OUTPUT_DIM];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Inverted dropout with masks drawn from the supplied seed.
    Train,
    /// Dropout disabled; a pure function of params and input.
    Eval,
}

/// Activations kept from a forward pass for backpropagation.
struct Cache {
    conv_pre: Vec<Vec<f64>>,
    conv_post: Vec<Vec<f64>>,
    mask: Vec<f64>,
    dropped: Vec<f64>,
    fc_pre: Vec<Vec<f64>>,
    fc_post: Vec<Vec<f64>>,
}

struct Net<'a> {
    params: &'a ModelParams,
    convs: Vec<ConvGeom>,
    fcs: Vec<FcGeom>,
}

impl<'a> Net<'a> {
    fn new(params: &'a ModelParams) -> Result<Self> {
        let (convs, fcs) = params.arch.geometry()?;
        let expected = params.arch.param_shapes()?;
        if expected != params.shapes() {
            return Err(Error::Shape("parameter tensors do not match the architecture".into()));
        }
        Ok(Net { params, convs, fcs })
    }

    fn flat_len(&self) -> usize {
        let last = self.convs.last().expect("at least one conv layer");
        last.out_channels * last.out_len
    }

    fn cache(&self) -> Cache {
        Cache {
            conv_pre: self
                .convs
                .iter()
                .map(|g| vec![0.0; g.out_channels * g.out_len])
                .collect(),
            conv_post: self
                .convs
                .iter()
                .map(|g| vec![0.0; g.out_channels * g.out_len])
                .collect(),
            mask: Vec::new(),
            dropped: vec![0.0; self.flat_len()],
            fc_pre: self.fcs.iter().map(|g| vec![0.0; g.outputs]).collect(),
            fc_post: self.fcs.iter().map(|g| vec![0.0; g.outputs]).collect(),
        }
    }

    fn conv_weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let t = &self.params.tensors;
        (&t[2 * layer].data, &t[2 * layer + 1].data)
    }

    fn fc_weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let base = 2 * (self.convs.len() + layer);
        let t = &self.params.tensors;
        (&t[base].data, &t[base + 1].data)
    }

    fn forward(&self, x: &[f64], cache: &mut Cache) -> Logits {
        for (i, g) in self.convs.iter().enumerate() {
            let (w, b) = self.conv_weights(i);
            let (before, rest) = cache.conv_post.split_at_mut(i);
            let input: &[f64] = if i == 0 { x } else { &before[i - 1] };
            let pre = &mut cache.conv_pre[i];
            let post = &mut rest[0];
            for o in 0..g.out_channels {
                for t in 0..g.out_len {
                    let mut sum = b[o];
                    for c in 0..g.in_channels {
                        let wrow = &w[(o * g.in_channels + c) * g.kernel..][..g.kernel];
                        let xrow = &input[c * g.in_len + t * g.stride..][..g.kernel];
                        sum += wrow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    let idx = o * g.out_len + t;
                    pre[idx] = sum;
                    post[idx] = g.activation.apply(sum);
                }
            }
        }

        let flat = cache.conv_post.last().expect("at least one conv layer");
        if cache.mask.is_empty() {
            cache.dropped.copy_from_slice(flat);
        } else {
            for ((d, &v), &m) in cache.dropped.iter_mut().zip(flat).zip(&cache.mask) {
                *d = v * m;
            }
        }

        for (j, g) in self.fcs.iter().enumerate() {
            let (w, b) = self.fc_weights(j);
            let (before, rest) = cache.fc_post.split_at_mut(j);
            let input: &[f64] = if j == 0 { &cache.dropped } else { &before[j - 1] };
            let pre = &mut cache.fc_pre[j];
            let post = &mut rest[0];
            for o in 0..g.outputs {
                let row = &w[o * g.inputs..][..g.inputs];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                pre[o] = z;
                post[o] = g.activation.apply(z);
            }
        }
        let out = cache.fc_post.last().expect("at least one fc layer");
        [out[0], out[1]]
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
    fn backward(&self, x: &[f64], cache: &Cache, dlogits: Logits, grads: &mut GradientSet) {
        let nc = self.convs.len();
        let mut delta: Vec<f64> = dlogits.to_vec();

        for j in (0..self.fcs.len()).rev() {
            let g = self.fcs[j];
            let (w, _) = self.fc_weights(j);
            let input: &[f64] = if j == 0 { &cache.dropped } else { &cache.fc_post[j - 1] };
            let pre = &cache.fc_pre[j];
            let dz: Vec<f64> = delta
                .iter()
                .zip(pre)
                .map(|(d, &z)| d * g.activation.derivative(z))
                .collect();
            let (gw, rest) = grads.tensors[2 * (nc + j)..].split_at_mut(1);
            let gw = &mut gw[0].data;
            let gb = &mut rest[0].data;
            let mut dinput = vec![0.0; g.inputs];
            for o in 0..g.outputs {
                let d = dz[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * g.inputs..][..g.inputs];
                let grow = &mut gw[o * g.inputs..][..g.inputs];
                for i in 0..g.inputs {
                    grow[i] += d * input[i];
                    dinput[i] += row[i] * d;
                }
            }
            delta = dinput;
        }

        if !cache.mask.is_empty() {
            for (d, &m) in delta.iter_mut().zip(&cache.mask) {
                *d *= m;
            }
        }

        for i in (0..nc).rev() {
            let g = self.convs[i];
            let (w, _) = self.conv_weights(i);
            let input: &[f64] = if i == 0 { x } else { &cache.conv_post[i - 1] };
            let pre = &cache.conv_pre[i];
            let (gw, rest) = grads.tensors[2 * i..].split_at_mut(1);
            let gw = &mut gw[0].data;
            let gb = &mut rest[0].data;
            let mut dinput = if i > 0 {
                vec![0.0; g.in_channels * g.in_len]
            } else {
                Vec::new()
            };
            for (o, gb_o) in gb.iter_mut().enumerate().take(g.out_channels) {
                for t in 0..g.out_len {
                    let idx = o * g.out_len + t;
                    let d = delta[idx] * g.activation.derivative(pre[idx]);
                    if d == 0.0 {
                        continue;
                    }
                    *gb_o += d;
                    for c in 0..g.in_channels {
                        let woff = (o * g.in_channels + c) * g.kernel;
                        let xoff = c * g.in_len + t * g.stride;
                        for k in 0..g.kernel {
                            gw[woff + k] += d * input[xoff + k];
                        }
                        if i > 0 {
                            for k in 0..g.kernel {
                                dinput[xoff + k] += w[woff + k] * d;
                            }
                        }
                    }
                }
            }
            delta = dinput;
        }
    }
}

fn check_batch(params: &ModelParams, batch: &[&[f64]]) -> Result<()> {
    for (i, x) in batch.iter().enumerate() {
        if x.len() != params.arch.input_length {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, model expects {}",
                x.len(),
                params.arch.input_length
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input sample {i}")));
        }
    }
    Ok(())
}

/// Draws one inverted-dropout mask per sample, in batch order.
fn dropout_masks(rate: f64, len: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..count)
        .map(|_| {
            (0..len)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect()
        })
        .collect()
}

fn masks_for(net: &Net, mode: Mode, count: usize, seed: u64) -> Option<Vec<Vec<f64>>> {
    let rate = net.params.arch.dropout_rate;
    match mode {
        Mode::Train if rate > 0.0 => Some(dropout_masks(rate, net.flat_len(), count, seed)),
        _ => None,
    }
}

/// Logits for each sample. `seed` only matters in [`Mode::Train`].
pub fn forward(params: &ModelParams, batch: &[&[f64]], mode: Mode, seed: u64) -> Result<Vec<Logits>> {
    let net = Net::new(params)?;
    check_batch(params, batch)?;
    let masks = masks_for(&net, mode, batch.len(), seed);
    let mut cache = net.cache();
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if let Some(m) = &masks {
                cache.mask.clone_from(&m[i]);
            }
            net.forward(x, &mut cache)
        })
        .collect())
}

fn cross_entropy(logits: Logits, label: usize) -> (f64, Logits) {
    let max = logits[0].max(logits[1]);
    let e = [(logits[0] - max).exp(), (logits[1] - max).exp()];
    let sum = e[0] + e[1];
    let loss = max + sum.ln() - logits[label];
    let mut d = [e[0] / sum, e[1] / sum];
    d[label] -= 1.0;
    (loss, d)
}

fn check_labels(batch: &[&[f64]], labels: &[u8]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("loss needs a non-empty batch".into()));
    }
    if batch.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            batch.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Shape(format!("label {bad} is not binary")));
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch (labels: 0 benign, 1 attack).
pub fn loss(params: &ModelParams, batch: &[&[f64]], labels: &[u8], mode: Mode, seed: u64) -> Result<f64> {
    check_labels(batch, labels)?;
    let logits = forward(params, batch, mode, seed)?;
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| cross_entropy(l, y as usize).0)
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean softmax cross-entropy and its exact gradient. In [`Mode::Train`]
/// the dropout masks are the ones [`forward`] draws for the same seed.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[&[f64]],
    labels: &[u8],
    mode: Mode,
    seed: u64,
) -> Result<(f64, GradientSet)> {
    check_labels(batch, labels)?;
    let net = Net::new(params)?;
    check_batch(params, batch)?;
    let masks = masks_for(&net, mode, batch.len(), seed);
    let mut cache = net.cache();
    let mut grads = GradientSet::zeros_like(params);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (i, (x, &y)) in batch.iter().zip(labels).enumerate() {
        if let Some(m) = &masks {
            cache.mask.clone_from(&m[i]);
        }
        let logits = net.forward(x, &mut cache);
        let (l, d) = cross_entropy(logits, y as usize);
        total += l;
        net.backward(x, &cache, [d[0] * scale, d[1] * scale], &mut grads);
    }
    if grads.values().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((total * scale, grads))
}

/// Argmax of the logits; ties go to benign.
pub fn label_from_logits(logits: Logits) -> ClassId {
    if logits[1] > logits[0] {
        1
    } else {
        0
    }
}

/// Eval-mode prediction for one sample: 0 benign, 1 attack.
pub fn predict(params: &ModelParams, sample: &[f64]) -> Result<ClassId> {
    let logits = forward(params, &[sample], Mode::Eval, 0)?;
    Ok(label_from_logits(logits[0]))
}

/// Eval-mode predictions for many samples, computed in parallel chunks.
pub fn predict_batch(params: &ModelParams, samples: &[&[f64]]) -> Result<Vec<ClassId>> {
    let net = Net::new(params)?;
    check_batch(params, samples)?;
    Ok(samples
        .par_chunks(256)
        .flat_map_iter(|chunk| {
            let mut cache = net.cache();
            chunk
                .iter()
                .map(|x| label_from_logits(net.forward(x, &mut cache)))
                .collect::<Vec<_>>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::arch::{Activation, ConvSpec, FcSpec, ModelArch};
    use crate::neuralnet::init_model;

    fn toy_arch() -> ModelArch {
        ModelArch {
            input_length: 2,
            conv: vec![ConvSpec {
                out_channels: 1,
                kernel_size: 2,
                stride: 1,
                activation: Activation::Identity,
            }],
            dropout_rate: 0.0,
            fc: vec![
                FcSpec {
                    width: 1,
                    activation: Activation::Identity,
                },
                FcSpec {
                    width: 2,
                    activation: Activation::Identity,
                },
            ],
        }
    }

    #[test]
    fn hand_computed_convolution() {
        let mut p = ModelParams::zeros(&toy_arch()).unwrap();
        p.tensors[0].data = vec![1.0, 1.0];
        p.tensors[2].data = vec![1.0];
        p.tensors[4].data = vec![1.0, -1.0];
        let out = forward(&p, &[&[2.0, 4.0]], Mode::Eval, 0).unwrap();
        // conv: 1*2 + 1*4 = 6, passed through the identity FC, then split
        // into +6 / -6 logits.
        assert_eq!(out[0], [6.0, -6.0]);
        p.tensors[1].data = vec![0.5];
        let out = forward(&p, &[&[2.0, 4.0]], Mode::Eval, 0).unwrap();
        assert_eq!(out[0], [6.5, -6.5]);
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let arch = ModelArch::with_widths(16, [4, 4, 4, 8], 8);
        let p = ModelParams::zeros(&arch).unwrap();
        let x = vec![3.0; 16];
        assert_eq!(forward(&p, &[&x], Mode::Eval, 0).unwrap()[0], [0.0, 0.0]);
        let l = loss(&p, &[&x], &[0], Mode::Eval, 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn eval_is_repeatable_train_uses_masks() {
        let arch = ModelArch::with_widths(16, [4, 4, 4, 8], 8);
        let p = init_model(&arch, 3).unwrap();
        let x: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let a = forward(&p, &[&x], Mode::Eval, 1).unwrap();
        let b = forward(&p, &[&x], Mode::Eval, 2).unwrap();
        assert_eq!(a, b);
        let t1 = forward(&p, &[&x], Mode::Train, 1).unwrap();
        let t1b = forward(&p, &[&x], Mode::Train, 1).unwrap();
        let t2 = forward(&p, &[&x], Mode::Train, 2).unwrap();
        assert_eq!(t1, t1b);
        assert_ne!(t1, t2);
    }

    #[test]
    fn predict_tie_break_and_argmax() {
        assert_eq!(label_from_logits([2.0, -1.0]), 0);
        assert_eq!(label_from_logits([-1.0, 2.0]), 1);
        assert_eq!(label_from_logits([0.5, 0.5]), 0);
    }

    #[test]
    fn duplicated_batch_has_same_loss_and_gradient() {
        let arch = ModelArch::with_widths(16, [4, 4, 4, 8], 8);
        let p = init_model(&arch, 8).unwrap();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|s| (0..16).map(|i| ((i * 7 + s * 3) % 11) as f64 / 5.0).collect())
            .collect();
        let batch: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let labels = [0u8, 1, 1];
        let doubled: Vec<&[f64]> = batch.iter().chain(batch.iter()).copied().collect();
        let doubled_labels = [0u8, 1, 1, 0, 1, 1];
        let (l1, g1) = loss_and_grad(&p, &batch, &labels, Mode::Eval, 0).unwrap();
        let (l2, g2) = loss_and_grad(&p, &doubled, &doubled_labels, Mode::Eval, 0).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_and_label_errors() {
        let arch = ModelArch::with_widths(16, [4, 4, 4, 8], 8);
        let p = init_model(&arch, 0).unwrap();
        let short = vec![0.0; 15];
        assert!(matches!(forward(&p, &[&short], Mode::Eval, 0), Err(Error::Shape(_))));
        let nan = vec![f64::NAN; 16];
        assert!(matches!(forward(&p, &[&nan], Mode::Eval, 0), Err(Error::NonFinite(_))));
        let ok = vec![0.0; 16];
        assert!(loss_and_grad(&p, &[&ok], &[2], Mode::Eval, 0).is_err());
        assert!(loss_and_grad(&p, &[], &[], Mode::Eval, 0).is_err());
    }
}
