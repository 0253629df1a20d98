use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{attack_accuracy, confusion, precision_recall, ConfusionCounts};
use crate::dataset::{ClassId, Dataset, BENIGN};
use crate::neuralnet::{predict_batch, ModelParams};
use crate::preprocess::FittedPipeline;
use crate::{Error, Result};

/// Attack accuracy of every (train attack, test attack) combination for one
/// approach. Row `i` is the model trained on `attacks[i]`, column `j` the
/// test set of `attacks[j]`; the diagonal is localized testing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityMatrix {
    pub approach: String,
    pub attacks: Vec<ClassId>,
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<Option<ConfusionCounts>>>,
}

impl TransferabilityMatrix {
    pub fn from_accuracy(
        approach: impl Into<String>,
        attacks: Vec<ClassId>,
        accuracy: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let a = attacks.len();
        if accuracy.len() != a || accuracy.iter().any(|row| row.len() != a) {
            return Err(Error::Shape(format!("matrix must be {a}x{a}")));
        }
        if accuracy.iter().flatten().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidSpec("matrix values must lie in [0, 1]".into()));
        }
        Ok(TransferabilityMatrix {
            approach: approach.into(),
            attacks,
            accuracy,
            counts: vec![vec![None; a]; a],
        })
    }

    pub fn index_of(&self, attack: ClassId) -> Option<usize> {
        self.attacks.iter().position(|&a| a == attack)
    }

    /// Cell for (train attack, test attack) given as class ids.
    pub fn get(&self, train: ClassId, test: ClassId) -> Option<f64> {
        self.accuracy[self.index_of(train)?][self.index_of(test)?]
    }

    /// Attack recall of the cell, for recall comparisons.
    pub fn recall(&self, train: ClassId, test: ClassId) -> Option<f64> {
        let c = self.counts[self.index_of(train)?][self.index_of(test)?]?;
        precision_recall(&c).recall
    }

    /// Diagonal cells in attack order.
    pub fn localized(&self) -> Vec<(ClassId, Option<f64>)> {
        self.attacks
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, self.accuracy[i][i]))
            .collect()
    }

    pub fn mean_localized(&self) -> Option<f64> {
        let values: Vec<f64> = self.localized().into_iter().filter_map(|(_, v)| v).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Grid with a header row and column of attack numbers; `NA` marks
    /// missing cells.
    pub fn to_csv(&self) -> String {
        self.grid_csv(|i, j| self.accuracy[i][j])
    }

    pub fn recall_csv(&self) -> String {
        self.grid_csv(|i, j| self.counts[i][j].and_then(|c| precision_recall(&c).recall))
    }

    fn grid_csv(&self, cell: impl Fn(usize, usize) -> Option<f64>) -> String {
        let mut out = String::from("train\\test");
        for a in &self.attacks {
            write!(out, ",{a}").unwrap();
        }
        out.push('\n');
        for (i, a) in self.attacks.iter().enumerate() {
            write!(out, "{a}").unwrap();
            for j in 0..self.attacks.len() {
                match cell(i, j) {
                    Some(v) => write!(out, ",{v:.6}").unwrap(),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`TransferabilityMatrix::to_csv`].
    pub fn from_csv(approach: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Csv("empty matrix file".into()))?;
        let parse_id = |s: &str| {
            s.trim()
                .parse::<ClassId>()
                .map_err(|_| Error::Csv(format!("bad attack number {s:?}")))
        };
        let attacks: Vec<ClassId> = header.split(',').skip(1).map(parse_id).collect::<Result<_>>()?;
        let mut accuracy = Vec::new();
        for (row, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let id = parse_id(cells.next().unwrap_or_default())?;
            if attacks.get(row) != Some(&id) {
                return Err(Error::Csv(format!(
                    "row {} is labeled {id}, expected {:?}",
                    row + 1,
                    attacks.get(row)
                )));
            }
            let values = cells
                .map(|c| match c.trim() {
                    "NA" => Ok(None),
                    v => v
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Csv(format!("bad cell {v:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            accuracy.push(values);
        }
        Self::from_accuracy(approach, attacks, accuracy)
    }
}

/// Splits a test set into one benign + single-attack set per attack class.
pub fn test_sets_by_attack(test: &Dataset, attacks: &[ClassId]) -> Result<BTreeMap<ClassId, Dataset>> {
    attacks
        .iter()
        .map(|&a| {
            if a == BENIGN {
                return Err(Error::InvalidSpec("benign is not an attack class".into()));
            }
            let subset = test.filter_labels(&[BENIGN, a], format!("test_set[{a}]"))?;
            if subset.attack_count() == 0 {
                return Err(Error::MissingClass(a));
            }
            if subset.benign_count() == 0 {
                return Err(Error::Empty(format!("test set for attack {a} has no benign records")));
            }
            Ok((a, subset))
        })
        .collect()
}

/// Scores every model on every test set after inference-side preprocessing.
pub fn build_matrix(
    models: &BTreeMap<ClassId, ModelParams>,
    test_sets: &BTreeMap<ClassId, Dataset>,
    pipeline: &FittedPipeline,
    approach: &str,
) -> Result<TransferabilityMatrix> {
    let attacks: Vec<ClassId> = models.keys().copied().collect();
    if attacks.is_empty() {
        return Err(Error::Empty("no models to evaluate".into()));
    }
    if let Some(a) = attacks.iter().find(|a| !test_sets.contains_key(a)) {
        return Err(Error::Missing(format!("test set for attack {a}")));
    }
    if let Some(a) = test_sets.keys().find(|a| !models.contains_key(a)) {
        return Err(Error::Missing(format!("model for attack {a}")));
    }
    let prepared: Vec<Dataset> = attacks
        .iter()
        .map(|a| pipeline.transform_eval(&test_sets[a]))
        .collect::<Result<_>>()?;

    let n = attacks.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let scored: Vec<(ConfusionCounts, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let ds = &prepared[j];
            let samples: Vec<&[f64]> = ds.records().iter().map(|r| r.features.as_slice()).collect();
            let truth: Vec<ClassId> = ds.records().iter().map(|r| r.label).collect();
            let preds = predict_batch(&models[&attacks[i]], &samples)?;
            let c = confusion(&preds, &truth)?;
            let acc = attack_accuracy(&c).map_err(|e| e.in_stage(format!("cell ({}, {})", attacks[i], attacks[j])))?;
            Ok((c, acc))
        })
        .collect::<Result<_>>()?;

    let mut accuracy = vec![vec![None; n]; n];
    let mut counts = vec![vec![None; n]; n];
    for (&(i, j), (c, acc)) in cells.iter().zip(scored) {
        accuracy[i][j] = Some(acc);
        counts[i][j] = Some(c);
    }
    Ok(TransferabilityMatrix {
        approach: approach.to_string(),
        attacks,
        accuracy,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_missing_cells() {
        let m = TransferabilityMatrix::from_accuracy(
            "fed",
            vec![1, 2],
            vec![vec![Some(1.0), Some(0.25)], vec![None, Some(0.875)]],
        )
        .unwrap();
        let text = m.to_csv();
        assert_eq!(text, "train\\test,1,2\n1,1.000000,0.250000\n2,NA,0.875000\n");
        let back = TransferabilityMatrix::from_csv("fed", &text).unwrap();
        assert_eq!(back.accuracy, m.accuracy);
        assert_eq!(back.get(2, 2), Some(0.875));
        assert_eq!(back.mean_localized(), Some(0.9375));
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(TransferabilityMatrix::from_accuracy("x", vec![1, 2], vec![vec![Some(0.5)]]).is_err());
        assert!(TransferabilityMatrix::from_accuracy("x", vec![1], vec![vec![Some(1.5)]]).is_err());
    }
}
