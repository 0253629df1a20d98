use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::matrix::TransferabilityMatrix;
use crate::dataset::ClassId;
use crate::{Error, Result};

/// Default transferability threshold on attack accuracy (strict).
pub const THRESHOLD: f64 = 0.7;

/// Accuracy band of a pair. Bands are upper-inclusive, so the three named
/// ones partition (0.7, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bin {
    #[serde(rename = ">90")]
    Above90,
    #[serde(rename = "80-90")]
    From80To90,
    #[serde(rename = "70-80")]
    From70To80,
    /// Only reachable with a threshold below 0.7.
    #[serde(rename = "<=70")]
    AtMost70,
}

impl Bin {
    pub fn of(value: f64) -> Bin {
        if value > 0.9 {
            Bin::Above90
        } else if value > 0.8 {
            Bin::From80To90
        } else if value > 0.7 {
            Bin::From70To80
        } else {
            Bin::AtMost70
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Bin::Above90 => ">90",
            Bin::From80To90 => "80-90",
            Bin::From70To80 => "70-80",
            Bin::AtMost70 => "<=70",
        }
    }
}

impl fmt::Display for Bin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityPair {
    pub approach: String,
    pub train: ClassId,
    pub test: ClassId,
    pub attack_accuracy: f64,
    pub bin: Bin,
}

/// Off-diagonal cells strictly above `threshold`, in row-major order.
pub fn classify_pairs(m: &TransferabilityMatrix, threshold: f64) -> Vec<TransferabilityPair> {
    let mut pairs = Vec::new();
    for (i, &train) in m.attacks.iter().enumerate() {
        for (j, &test) in m.attacks.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(v) = m.accuracy[i][j].filter(|&v| v > threshold) {
                pairs.push(TransferabilityPair {
                    approach: m.approach.clone(),
                    train,
                    test,
                    attack_accuracy: v,
                    bin: Bin::of(v),
                });
            }
        }
    }
    pairs
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCounts {
    #[serde(rename = ">90")]
    pub above_90: usize,
    #[serde(rename = "80-90")]
    pub from_80_to_90: usize,
    #[serde(rename = "70-80")]
    pub from_70_to_80: usize,
    #[serde(rename = "<=70", default, skip_serializing_if = "is_zero")]
    pub at_most_70: usize,
    pub total: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

pub fn bin_counts(pairs: &[TransferabilityPair]) -> BinCounts {
    let mut c = BinCounts {
        total: pairs.len(),
        ..BinCounts::default()
    };
    for p in pairs {
        match p.bin {
            Bin::Above90 => c.above_90 += 1,
            Bin::From80To90 => c.from_80_to_90 += 1,
            Bin::From70To80 => c.from_70_to_80 += 1,
            Bin::AtMost70 => c.at_most_70 += 1,
        }
    }
    c
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub as_train: usize,
    pub as_test: usize,
}

/// How often each attack appears as the train or test member of a pair.
/// Every attack in `attacks` is reported, including those with no pairs.
pub fn occurrence_counts<I>(pairs: I, attacks: &[ClassId]) -> BTreeMap<ClassId, Occurrence>
where
    I: IntoIterator<Item = (ClassId, ClassId)>,
{
    let mut out: BTreeMap<ClassId, Occurrence> = attacks.iter().map(|&a| (a, Occurrence::default())).collect();
    for (train, test) in pairs {
        out.entry(train).or_default().as_train += 1;
        out.entry(test).or_default().as_test += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairApproaches {
    pub train: ClassId,
    pub test: ClassId,
    pub approaches: Vec<String>,
}

/// Which approaches uncover which pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub approaches: Vec<String>,
    pub pairs: Vec<PairApproaches>,
    pub total_pairs: usize,
    /// Pairs found by exactly one approach.
    pub single_approach: usize,
    /// Pairs found by every approach.
    pub common_to_all: usize,
    /// Per approach, the pairs only it finds.
    pub unique_per_approach: BTreeMap<String, usize>,
}

impl OverlapReport {
    pub fn distinct_pairs(&self) -> impl Iterator<Item = (ClassId, ClassId)> + '_ {
        self.pairs.iter().map(|p| (p.train, p.test))
    }
}

/// Builds the overlap report from per-approach pair sets.
pub fn overlap<S: AsRef<str>>(per_approach: &[(S, Vec<(ClassId, ClassId)>)]) -> OverlapReport {
    let approaches: Vec<String> = per_approach.iter().map(|(a, _)| a.as_ref().to_string()).collect();
    let mut found: BTreeMap<(ClassId, ClassId), BTreeSet<usize>> = BTreeMap::new();
    for (k, (_, pairs)) in per_approach.iter().enumerate() {
        for &pair in pairs {
            found.entry(pair).or_default().insert(k);
        }
    }
    let mut unique_per_approach: BTreeMap<String, usize> = approaches.iter().map(|a| (a.clone(), 0)).collect();
    let mut single_approach = 0;
    let mut common_to_all = 0;
    let mut pairs = Vec::with_capacity(found.len());
    for ((train, test), who) in found {
        if who.len() == 1 {
            single_approach += 1;
            let only = who.iter().next().unwrap();
            *unique_per_approach.get_mut(&approaches[*only]).unwrap() += 1;
        }
        if who.len() == approaches.len() {
            common_to_all += 1;
        }
        pairs.push(PairApproaches {
            train,
            test,
            approaches: who.iter().map(|&k| approaches[k].clone()).collect(),
        });
    }
    OverlapReport {
        total_pairs: pairs.len(),
        approaches,
        pairs,
        single_approach,
        common_to_all,
        unique_per_approach,
    }
}

/// Overlap report over matrices that share one attack set.
pub fn compare_approaches(matrices: &[TransferabilityMatrix], threshold: f64) -> Result<OverlapReport> {
    if let Some(first) = matrices.first() {
        let mut reference = first.attacks.clone();
        reference.sort_unstable();
        for m in &matrices[1..] {
            let mut attacks = m.attacks.clone();
            attacks.sort_unstable();
            if attacks != reference {
                return Err(Error::InvalidSpec(format!(
                    "approach {} covers attacks {:?}, {} covers {:?}",
                    first.approach, first.attacks, m.approach, m.attacks
                )));
            }
        }
    }
    let per_approach: Vec<(String, Vec<(ClassId, ClassId)>)> = matrices
        .iter()
        .map(|m| {
            let pairs = classify_pairs(m, threshold).iter().map(|p| (p.train, p.test)).collect();
            (m.approach.clone(), pairs)
        })
        .collect();
    Ok(overlap(&per_approach))
}
