use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, FlowRecord, Manifest, BENIGN};
use crate::{seed, Error, Result};

/// Isotropic Gaussian generator for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassGenerator {
    pub label: ClassId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mean: Vec<f64>,
    /// Per-feature standard deviation.
    #[serde(default = "unit_scale")]
    pub scale: f64,
    pub count: usize,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub feature_count: usize,
    pub classes: Vec<ClassGenerator>,
    /// Class pairs drawn from one shared distribution: every class in a
    /// connected group samples from the generator of its lowest label.
    #[serde(default)]
    pub overlap: Vec<[ClassId; 2]>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.feature_count == 0 {
            return Err(Error::InvalidSpec("feature_count must be positive".into()));
        }
        let mut labels = BTreeSet::new();
        for c in &self.classes {
            if !labels.insert(c.label) {
                return Err(Error::InvalidSpec(format!("class {} declared twice", c.label)));
            }
            if c.mean.len() != self.feature_count {
                return Err(Error::InvalidSpec(format!(
                    "class {} mean has {} entries, feature_count is {}",
                    c.label,
                    c.mean.len(),
                    self.feature_count
                )));
            }
            if !(c.scale.is_finite() && c.scale > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "class {} scale {} must be > 0",
                    c.label, c.scale
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::InvalidSpec(format!("class {} mean is not finite", c.label)));
            }
            if c.count == 0 {
                return Err(Error::InvalidSpec(format!("class {} has zero samples", c.label)));
            }
        }
        for pair in &self.overlap {
            for l in pair {
                if !labels.contains(l) {
                    return Err(Error::InvalidSpec(format!("overlap references undeclared class {l}")));
                }
            }
        }
        Ok(())
    }

    /// Display names: the declared name, else `BENIGN` / `attack_<k>`.
    pub fn class_names(&self) -> BTreeMap<ClassId, String> {
        self.classes
            .iter()
            .map(|c| {
                let name = c.name.clone().unwrap_or_else(|| {
                    if c.label == BENIGN {
                        "BENIGN".to_string()
                    } else {
                        format!("attack_{}", c.label)
                    }
                });
                (c.label, name)
            })
            .collect()
    }

    /// Maps each class to the class whose generator it samples from.
    fn generator_of(&self) -> BTreeMap<ClassId, ClassId> {
        let mut parent: BTreeMap<ClassId, ClassId> = self.classes.iter().map(|c| (c.label, c.label)).collect();
        fn find(parent: &mut BTreeMap<ClassId, ClassId>, x: ClassId) -> ClassId {
            let p = parent[&x];
            if p == x {
                return x;
            }
            let root = find(parent, p);
            parent.insert(x, root);
            root
        }
        for &[a, b] in &self.overlap {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
        let labels: Vec<ClassId> = parent.keys().copied().collect();
        labels.into_iter().map(|l| (l, find(&mut parent, l))).collect()
    }
}

/// Samples every class from its generator, then shuffles the records into
/// one timeline. `row` is the position on that timeline.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let by_label: BTreeMap<ClassId, &ClassGenerator> = spec.classes.iter().map(|c| (c.label, c)).collect();
    let generator_of = spec.generator_of();

    let mut records = Vec::with_capacity(spec.classes.iter().map(|c| c.count).sum());
    for class in &spec.classes {
        let source = by_label[&generator_of[&class.label]];
        let mut rng = seed::rng(seed::derive(seed, &[class.label as u64]));
        for _ in 0..class.count {
            let features = source
                .mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + source.scale * z
                })
                .collect();
            records.push(FlowRecord {
                row: 0,
                features,
                label: class.label,
            });
        }
    }
    records.shuffle(&mut seed::rng(seed::derive(seed, &[u64::MAX])));
    for (i, r) in records.iter_mut().enumerate() {
        r.row = i as u64;
    }

    let manifest = Manifest {
        source: format!("synthetic(seed={seed})"),
        rows_read: records.len(),
        stages: vec!["generate".into()],
        ..Manifest::default()
    };
    Dataset::new(records, spec.feature_count, manifest)
}
