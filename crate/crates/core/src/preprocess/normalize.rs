use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FlowRecord};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    MinMax,
    /// Mean and population standard deviation.
    ZScore,
}

/// Per-feature affine scaling fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    /// Min (min-max) or mean (z-score) per feature.
    pub offset: Vec<f64>,
    /// Range (min-max) or standard deviation (z-score); zero for constant
    /// features, which map to 0.
    pub spread: Vec<f64>,
    /// Clamp min-max output into [0, 1].
    pub clamp: bool,
}

pub fn fit_normalizer(train: &Dataset, mode: NormMode) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(Error::Empty("cannot fit a normalizer on no data".into()));
    }
    let f = train.feature_count();
    let n = train.len() as f64;
    let (offset, spread) = match mode {
        NormMode::MinMax => {
            let mut lo = vec![f64::INFINITY; f];
            let mut hi = vec![f64::NEG_INFINITY; f];
            for r in train.records() {
                for (i, &v) in r.features.iter().enumerate() {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                }
            }
            let range = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
            (lo, range)
        }
        NormMode::ZScore => {
            let mut mean = vec![0.0; f];
            for r in train.records() {
                for (m, v) in mean.iter_mut().zip(&r.features) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; f];
            for r in train.records() {
                for i in 0..f {
                    let d = r.features[i] - mean[i];
                    var[i] += d * d;
                }
            }
            let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
            (mean, std)
        }
    };
    Ok(Normalizer {
        mode,
        offset,
        spread,
        clamp: false,
    })
}

impl Normalizer {
    pub fn feature_count(&self) -> usize {
        self.offset.len()
    }

    pub fn apply_one(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.offset.iter().zip(&self.spread))
            .map(|(&x, (&o, &s))| {
                let y = if s > 0.0 { (x - o) / s } else { 0.0 };
                if self.clamp && self.mode == NormMode::MinMax {
                    y.clamp(0.0, 1.0)
                } else {
                    y
                }
            })
            .collect()
    }
}

pub fn apply_normalizer(n: &Normalizer, ds: &Dataset) -> Result<Dataset> {
    if n.feature_count() != ds.feature_count() {
        return Err(Error::Shape(format!(
            "normalizer fitted on {} features, dataset has {}",
            n.feature_count(),
            ds.feature_count()
        )));
    }
    let records = ds
        .records()
        .iter()
        .map(|r| FlowRecord {
            row: r.row,
            features: n.apply_one(&r.features),
            label: r.label,
        })
        .collect();
    ds.derive(records, format!("normalize({:?}, clamp={})", n.mode, n.clamp))
}
