#![allow(dead_code)]

use fedids::dataset::{ClassGenerator, ClassId, Dataset, FlowRecord, Manifest, SyntheticSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    fedids::seed::rng(seed)
}

pub fn dataset(rows: Vec<(Vec<f64>, ClassId)>) -> Dataset {
    let f = rows.first().map_or(0, |(x, _)| x.len());
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, (features, label))| FlowRecord {
            row: i as u64,
            features,
            label,
        })
        .collect();
    Dataset::new(records, f, Manifest::default()).unwrap()
}

/// Uniform random features in [-1, 1) with the given labels.
pub fn random_dataset(labels: &[ClassId], f: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    dataset(
        labels
            .iter()
            .map(|&l| ((0..f).map(|_| r.random_range(-1.0..1.0)).collect(), l))
            .collect(),
    )
}

pub fn mean_vec(f: usize, on: &[usize], value: f64) -> Vec<f64> {
    (0..f).map(|i| if on.contains(&i) { value } else { 0.0 }).collect()
}

pub fn class(label: ClassId, mean: Vec<f64>, count: usize) -> ClassGenerator {
    ClassGenerator {
        label,
        name: None,
        mean,
        scale: 1.0,
        count,
    }
}

pub fn spec(feature_count: usize, classes: Vec<ClassGenerator>, overlap: Vec<[ClassId; 2]>) -> SyntheticSpec {
    SyntheticSpec {
        feature_count,
        classes,
        overlap,
    }
}

pub const REFERENCE_APPROACHES: [&str; 5] = ["central", "fed", "fed_bootstrap", "fed_tempav", "tabfids"];

/// One 11x11 matrix per approach from the reference pair fixture. Cells not
/// listed for an approach get 0.5 and the diagonal gets 1.0.
pub fn reference_matrices() -> Vec<fedids::evaluation::TransferabilityMatrix> {
    let text = include_str!("../fixtures/reference_pairs.json");
    let doc: serde_json::Value = serde_json::from_str(text).unwrap();
    let attacks: Vec<ClassId> = (1..=11).collect();
    REFERENCE_APPROACHES
        .iter()
        .map(|&approach| {
            let mut acc = vec![vec![Some(0.5); 11]; 11];
            for (i, row) in acc.iter_mut().enumerate() {
                row[i] = Some(1.0);
            }
            for p in doc["pairs"].as_array().unwrap() {
                if let Some(v) = p["attack_accuracy"][approach].as_f64() {
                    let train = p["train"].as_u64().unwrap() as usize;
                    let test = p["test"].as_u64().unwrap() as usize;
                    acc[train - 1][test - 1] = Some(v);
                }
            }
            fedids::evaluation::TransferabilityMatrix::from_accuracy(approach, attacks.clone(), acc).unwrap()
        })
        .collect()
}
