use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Approach;
use crate::dataset::ClassId;
use crate::evaluation::{
    bin_counts, classify_pairs, compare_approaches, occurrence_counts, BinCounts, Occurrence, OverlapReport,
    TransferabilityMatrix, TransferabilityPair,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachReport {
    pub approach: Approach,
    pub matrix: TransferabilityMatrix,
    pub pairs: Vec<TransferabilityPair>,
    pub bins: BinCounts,
    pub occurrences: BTreeMap<ClassId, Occurrence>,
    pub localized: BTreeMap<ClassId, Option<f64>>,
    pub mean_localized: Option<f64>,
    pub stages: Vec<String>,
    /// Training records per model (per node for federated approaches).
    pub train_samples: BTreeMap<ClassId, usize>,
    pub rounds: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub threshold: f64,
    pub attacks: Vec<ClassId>,
    pub names: BTreeMap<ClassId, String>,
    pub approaches: Vec<ApproachReport>,
    pub overlap: OverlapReport,
    /// Occurrences over the distinct pairs found by any approach.
    pub union_occurrences: BTreeMap<ClassId, Occurrence>,
    pub config_snapshot: String,
}

impl RunReport {
    pub fn approach(&self, approach: Approach) -> Option<&ApproachReport> {
        self.approaches.iter().find(|r| r.approach == approach)
    }

    pub fn summary(&self) -> String {
        let rows: Vec<SummaryRow> = self
            .approaches
            .iter()
            .map(|r| SummaryRow {
                approach: r.approach.tag().to_string(),
                bins: r.bins,
                mean_localized: r.mean_localized,
            })
            .collect();
        render_summary(self.threshold, &rows, &self.overlap, &self.union_occurrences)
    }

    /// Writes summary.txt, overlap.json and report.json into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("summary.txt"), &self.summary())?;
        write_json(&dir.join("overlap.json"), &self.overlap)?;
        write_json(&dir.join("report.json"), self)
    }
}

struct SummaryRow {
    approach: String,
    bins: BinCounts,
    mean_localized: Option<f64>,
}

fn render_summary(
    threshold: f64,
    rows: &[SummaryRow],
    overlap: &OverlapReport,
    union: &BTreeMap<ClassId, Occurrence>,
) -> String {
    let mut s = String::new();
    writeln!(s, "Transferable pairs (attack accuracy > {threshold:.2})").unwrap();
    writeln!(
        s,
        "{:<14}{:>6}{:>7}{:>7}{:>7}{:>11}",
        "approach", ">90", "80-90", "70-80", "total", "localized"
    )
    .unwrap();
    for r in rows {
        let loc = r
            .mean_localized
            .map_or_else(|| "NA".to_string(), |v| format!("{:.4}", v));
        writeln!(
            s,
            "{:<14}{:>6}{:>7}{:>7}{:>7}{:>11}",
            r.approach, r.bins.above_90, r.bins.from_80_to_90, r.bins.from_70_to_80, r.bins.total, loc
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(
        s,
        "All approaches: {} distinct pairs, {} found by one approach only, {} found by all",
        overlap.total_pairs, overlap.single_approach, overlap.common_to_all
    )
    .unwrap();
    let attacks: Vec<ClassId> = union.keys().copied().collect();
    write!(s, "{:<10}", "attack").unwrap();
    for a in &attacks {
        write!(s, "{a:>4}").unwrap();
    }
    writeln!(s).unwrap();
    for (label, pick) in [("as train", true), ("as test", false)] {
        write!(s, "{label:<10}").unwrap();
        for a in &attacks {
            let o = union[a];
            write!(s, "{:>4}", if pick { o.as_train } else { o.as_test }).unwrap();
        }
        writeln!(s).unwrap();
    }
    s
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Rebuilds pair lists, the overlap report and summary.txt from the
/// matrix.csv files of an output directory. Returns the summary text.
pub fn rerender(dir: &Path, threshold: f64) -> Result<String> {
    let mut matrices = Vec::new();
    for approach in Approach::ALL {
        let path = dir.join(approach.tag()).join("matrix.csv");
        if !path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        matrices.push(
            TransferabilityMatrix::from_csv(approach.tag(), &text)
                .map_err(|e| e.in_stage(path.display().to_string()))?,
        );
    }
    if matrices.is_empty() {
        return Err(Error::Missing(format!("no approach matrices under {}", dir.display())));
    }
    let mut rows = Vec::new();
    for m in &matrices {
        let pairs = classify_pairs(m, threshold);
        write_json(&dir.join(&m.approach).join("pairs.json"), &pairs)?;
        rows.push(SummaryRow {
            approach: m.approach.clone(),
            bins: bin_counts(&pairs),
            mean_localized: m.mean_localized(),
        });
    }
    let overlap = compare_approaches(&matrices, threshold)?;
    let union = occurrence_counts(overlap.distinct_pairs(), &matrices[0].attacks);
    write_json(&dir.join("overlap.json"), &overlap)?;
    let summary = render_summary(threshold, &rows, &overlap, &union);
    write_text(&dir.join("summary.txt"), &summary)?;
    Ok(summary)
}
