use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset};
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default = "default_train")]
    pub train_fraction: f64,
    #[serde(default = "default_holdout")]
    pub val_fraction: f64,
    #[serde(default = "default_holdout")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_train() -> f64 {
    0.8
}

fn default_holdout() -> f64 {
    0.1
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidSplit(format!("fractions {f:?} must lie in [0, 1]")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Stratified split into (train, val, test).
///
/// Each class is shuffled under the split seed and cut by the fractions;
/// a class with at least three records lands in every split with a nonzero
/// fraction. Within a split, records keep their original relative order.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let fractions = [spec.train_fraction, spec.val_fraction, spec.test_fraction];
    let active = fractions.iter().filter(|&&f| f > 0.0).count();

    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records().iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }

    let mut assignment = vec![0u8; ds.len()];
    let mut warnings = Vec::new();
    for (&class, indices) in &by_class {
        let n = indices.len();
        let mut counts = split_counts(n, &fractions);
        if n >= active {
            // Give every nonzero-fraction split at least one record.
            for s in 0..3 {
                if fractions[s] > 0.0 && counts[s] == 0 {
                    let donor = (0..3).max_by_key(|&d| counts[d]).expect("three splits");
                    counts[donor] -= 1;
                    counts[s] += 1;
                }
            }
        } else {
            warnings.push(format!("class {class} has {n} records, fewer than the {active} splits"));
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut seed::rng(seed::derive(spec.seed, &[class as u64])));
        let mut cursor = 0;
        for (s, &c) in counts.iter().enumerate() {
            for &i in &shuffled[cursor..cursor + c] {
                assignment[i] = s as u8;
            }
            cursor += c;
        }
    }

    let mut parts: [Vec<_>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (r, &s) in ds.records().iter().zip(&assignment) {
        parts[s as usize].push(r.clone());
    }
    let [train, val, test] = parts;
    let stage = |name: &str| {
        format!(
            "split:{name}({}/{}/{}, seed={})",
            spec.train_fraction, spec.val_fraction, spec.test_fraction, spec.seed
        )
    };
    let mut out = [
        ds.derive(train, stage("train"))?,
        ds.derive(val, stage("val"))?,
        ds.derive(test, stage("test"))?,
    ];
    for part in &mut out {
        part.manifest_mut().warnings.extend(warnings.iter().cloned());
    }
    let [train, val, test] = out;
    Ok((train, val, test))
}

fn split_counts(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let train = ((n as f64) * fractions[0]).round() as usize;
    let train = train.min(n);
    let val = (((n as f64) * fractions[1]).round() as usize).min(n - train);
    let test = n - train - val;
    [train, val, test]
}
