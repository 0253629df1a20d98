//! Flow-record datasets: ingestion, splitting, federated partitioning and
//! synthetic generation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod ingest;
mod partition;
mod split;
mod synthetic;

pub use ingest::{load_flow_csv, load_flow_csvs, normalize_label, CleaningPolicy, Schema};
pub use partition::{partition_federated, NodeDataset};
pub use split::{split, SplitSpec};
pub use synthetic::{generate_synthetic, ClassGenerator, SyntheticSpec};

/// Class identifier: 0 is benign, 1..=A are attack classes.
pub type ClassId = u16;

pub const BENIGN: ClassId = 0;

/// One network flow: its feature vector and class label.
///
/// `row` is the position of the record in its source (file order or
/// generation order). It survives every transformation, so a record can
/// always be traced back to the one it was derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub row: u64,
    pub features: Vec<f64>,
    pub label: ClassId,
}

impl FlowRecord {
    pub fn is_attack(&self) -> bool {
        self.label != BENIGN
    }
}

/// Provenance and cleaning statistics carried alongside a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub rows_read: usize,
    /// Rows removed because a feature was NaN or infinite.
    pub dropped: usize,
    /// Feature cells replaced by the column median.
    pub imputed_cells: usize,
    /// Rows removed because their label is configured as ignored.
    pub ignored: usize,
    pub class_histogram: BTreeMap<ClassId, usize>,
    /// Transformations applied since ingestion, in order.
    pub stages: Vec<String>,
    pub warnings: Vec<String>,
}

/// An ordered, immutable collection of flow records sharing one feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<FlowRecord>,
    feature_count: usize,
    manifest: Manifest,
}

impl Dataset {
    /// Builds a dataset, checking that every record has `feature_count`
    /// finite features. The manifest histogram is recomputed.
    pub fn new(records: Vec<FlowRecord>, feature_count: usize, mut manifest: Manifest) -> Result<Self> {
        for r in &records {
            if r.features.len() != feature_count {
                return Err(Error::Shape(format!(
                    "record {} has {} features, dataset declares {}",
                    r.row,
                    r.features.len(),
                    feature_count
                )));
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("record {}", r.row)));
            }
        }
        manifest.class_histogram = histogram(&records);
        Ok(Self {
            records,
            feature_count,
            manifest,
        })
    }

    /// A new dataset over `records` that inherits this one's feature count
    /// and manifest, with `stage` appended to the stage list.
    pub fn derive(&self, records: Vec<FlowRecord>, stage: impl Into<String>) -> Result<Self> {
        let mut manifest = self.manifest.clone();
        manifest.stages.push(stage.into());
        Dataset::new(records, self.feature_count, manifest)
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FlowRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    /// Attack labels present in the dataset.
    pub fn attack_classes(&self) -> BTreeSet<ClassId> {
        self.records.iter().filter(|r| r.is_attack()).map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        histogram(&self.records)
    }

    pub fn benign_count(&self) -> usize {
        self.records.iter().filter(|r| !r.is_attack()).count()
    }

    pub fn attack_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_attack()).count()
    }

    /// Records whose label is in `labels`, order preserved.
    pub fn filter_labels(&self, labels: &[ClassId], stage: impl Into<String>) -> Result<Self> {
        let kept = self
            .records
            .iter()
            .filter(|r| labels.contains(&r.label))
            .cloned()
            .collect();
        self.derive(kept, stage)
    }

    /// Writes the dataset as CSV: feature columns `f0..`, then `label`
    /// holding the class name from `names` (or the number when unnamed).
    pub fn write_csv(&self, path: &Path, names: &BTreeMap<ClassId, String>) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut header: Vec<String> = (0..self.feature_count).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let mut line = String::new();
            for v in &r.features {
                // `{:?}` prints the shortest representation that round-trips.
                line.push_str(&format!("{v:?},"));
            }
            match names.get(&r.label) {
                Some(n) => line.push_str(n),
                None => line.push_str(&r.label.to_string()),
            }
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn histogram(records: &[FlowRecord]) -> BTreeMap<ClassId, usize> {
    let mut h = BTreeMap::new();
    for r in records {
        *h.entry(r.label).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
pub(crate) fn toy(labels: &[ClassId], feature_count: usize) -> Dataset {
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| FlowRecord {
            row: i as u64,
            features: (0..feature_count).map(|f| (i * feature_count + f) as f64).collect(),
            label,
        })
        .collect();
    Dataset::new(records, feature_count, Manifest::default()).unwrap()
}
