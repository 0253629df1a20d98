use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, FlowRecord, Manifest};
use crate::{Error, Result};

/// What to do with rows carrying NaN or infinite feature cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleaningPolicy {
    #[default]
    Drop,
    /// Replace non-finite cells with the median of the column's finite values.
    Median,
}

/// Column mapping for flow-record CSV files.
///
/// Label strings are matched after [`normalize_label`], so encoding damage
/// such as `Web Attack \u{fffd} Brute Force` still resolves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub label_column: String,
    /// Feature columns in order. When absent, every column except the label
    /// and `exclude_columns` is a feature, in file order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    #[serde(default)]
    pub exclude_columns: Vec<String>,
    /// Label string to class number. Benign must map to 0.
    pub labels: BTreeMap<String, ClassId>,
    /// Labels whose rows are skipped (counted in `Manifest::ignored`).
    #[serde(default)]
    pub ignore_labels: Vec<String>,
}

/// Lowercase ASCII alphanumerics only.
pub fn normalize_label(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl Schema {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Schema("label map is empty".into()));
        }
        let mut seen = BTreeMap::new();
        for (name, &class) in &self.labels {
            let key = normalize_label(name);
            if key.is_empty() {
                return Err(Error::Schema(format!("label {name:?} has no alphanumeric characters")));
            }
            if let Some(prev) = seen.insert(key, class) {
                if prev != class {
                    return Err(Error::Schema(format!("label {name:?} collides with another entry")));
                }
            }
        }
        if !self.labels.values().any(|&c| c == super::BENIGN) {
            return Err(Error::Schema("no label maps to benign (0)".into()));
        }
        Ok(())
    }

    /// The CIC-IDS 2017 layout: 78 feature columns plus ` Label`.
    ///
    /// Attack numbers follow the alphabetical order of the eleven retained
    /// attack names. That order puts DoS Slowloris at 6, FTP-Patator at 7 and
    /// PortScan at 8; the remaining assignments are assumed. Heartbleed,
    /// Infiltration and Web Attack SQL Injection are too rare to use and are
    /// ignored.
    pub fn cicids2017() -> Self {
        let names = [
            ("BENIGN", 0),
            ("Bot", 1),
            ("DDoS", 2),
            ("DoS GoldenEye", 3),
            ("DoS Hulk", 4),
            ("DoS Slowhttptest", 5),
            ("DoS slowloris", 6),
            ("FTP-Patator", 7),
            ("PortScan", 8),
            ("SSH-Patator", 9),
            ("Web Attack Brute Force", 10),
            ("Web Attack XSS", 11),
        ];
        Schema {
            label_column: "Label".into(),
            feature_columns: None,
            exclude_columns: Vec::new(),
            labels: names.iter().map(|&(n, c)| (n.to_string(), c)).collect(),
            ignore_labels: vec![
                "Heartbleed".into(),
                "Infiltration".into(),
                "Web Attack Sql Injection".into(),
            ],
        }
    }

    fn lookup(&self) -> BTreeMap<String, ClassId> {
        self.labels.iter().map(|(k, &v)| (normalize_label(k), v)).collect()
    }

    /// Resolves (label index, feature indices, feature names) for a header.
    fn resolve(&self, header: &[String]) -> Result<(usize, Vec<usize>, Vec<String>)> {
        let find = |name: &str| header.iter().position(|h| h == name.trim());
        let label_idx = find(&self.label_column)
            .ok_or_else(|| Error::Schema(format!("label column {:?} not in header", self.label_column)))?;
        let features = match &self.feature_columns {
            Some(cols) => cols
                .iter()
                .map(|c| find(c).ok_or_else(|| Error::Schema(format!("feature column {c:?} not in header"))))
                .collect::<Result<Vec<_>>>()?,
            None => {
                let excluded: BTreeSet<&str> = self.exclude_columns.iter().map(|s| s.trim()).collect();
                (0..header.len())
                    .filter(|&i| i != label_idx && !excluded.contains(header[i].as_str()))
                    .collect()
            }
        };
        if features.is_empty() {
            return Err(Error::Schema("no feature columns".into()));
        }
        let names = features.iter().map(|&i| header[i].clone()).collect();
        Ok((label_idx, features, names))
    }
}

/// Loads one CSV file. See [`load_flow_csvs`].
pub fn load_flow_csv(path: &Path, schema: &Schema, policy: CleaningPolicy) -> Result<Dataset> {
    load_flow_csvs(&[path], schema, policy)
}

/// Loads and concatenates CSV files in the given order, then cleans
/// non-finite cells according to `policy`.
///
/// Every file must resolve to the same feature columns. `FlowRecord::row`
/// counts data rows across all files, ignored and dropped rows included.
pub fn load_flow_csvs<P: AsRef<Path>>(paths: &[P], schema: &Schema, policy: CleaningPolicy) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Missing("no input files".into()));
    }
    let lookup = schema.lookup();
    let ignored_labels: BTreeSet<String> = schema.ignore_labels.iter().map(|l| normalize_label(l)).collect();

    let mut raw: Vec<FlowRecord> = Vec::new();
    let mut feature_names: Option<Vec<String>> = None;
    let mut manifest = Manifest {
        source: paths
            .iter()
            .map(|p| p.as_ref().display().to_string())
            .collect::<Vec<_>>()
            .join(";"),
        ..Manifest::default()
    };
    let mut row: u64 = 0;

    for path in paths {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .byte_headers()
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| String::from_utf8_lossy(h).trim().to_string())
            .collect();
        let (label_idx, feature_idx, names) = schema.resolve(&header)?;
        match &feature_names {
            None => feature_names = Some(names),
            Some(prev) if *prev != names => {
                return Err(Error::Schema(format!(
                    "{}: feature columns differ from the first file",
                    path.display()
                )))
            }
            Some(_) => {}
        }

        let mut record = csv::ByteRecord::new();
        loop {
            let more = reader
                .read_byte_record(&mut record)
                .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
            if !more {
                break;
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            manifest.rows_read += 1;
            let this_row = row;
            row += 1;
            if record.len() != header.len() {
                return Err(Error::ColumnCount {
                    line,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let label_raw = String::from_utf8_lossy(&record[label_idx]).to_string();
            let key = normalize_label(&label_raw);
            if ignored_labels.contains(&key) {
                manifest.ignored += 1;
                continue;
            }
            let label = *lookup.get(&key).ok_or_else(|| Error::UnknownLabel {
                line,
                label: label_raw.trim().to_string(),
            })?;
            let features = feature_idx
                .iter()
                .map(|&i| parse_cell(&record[i], line, &header[i]))
                .collect::<Result<Vec<f64>>>()?;
            raw.push(FlowRecord {
                row: this_row,
                features,
                label,
            });
        }
    }

    let feature_count = feature_names.map(|n| n.len()).unwrap_or(0);
    let records = clean(raw, feature_count, policy, &mut manifest);
    if records.is_empty() {
        return Err(Error::Empty("no rows left after cleaning".into()));
    }
    manifest.stages.push(format!("ingest(cleaning={policy:?})"));
    Dataset::new(records, feature_count, manifest)
}

fn parse_cell(bytes: &[u8], line: u64, column: &str) -> Result<f64> {
    let text = String::from_utf8_lossy(bytes);
    let text = text.trim();
    if text.is_empty() {
        return Ok(f64::NAN);
    }
    // std accepts "inf", "infinity" and "nan" in any case.
    text.parse::<f64>().map_err(|_| Error::BadNumber {
        line,
        column: column.to_string(),
        value: text.to_string(),
    })
}

fn clean(
    mut raw: Vec<FlowRecord>,
    feature_count: usize,
    policy: CleaningPolicy,
    manifest: &mut Manifest,
) -> Vec<FlowRecord> {
    match policy {
        CleaningPolicy::Drop => {
            let before = raw.len();
            raw.retain(|r| r.features.iter().all(|v| v.is_finite()));
            manifest.dropped += before - raw.len();
            raw
        }
        CleaningPolicy::Median => {
            let medians: Vec<f64> = (0..feature_count)
                .map(|f| {
                    let mut col: Vec<f64> = raw.iter().map(|r| r.features[f]).filter(|v| v.is_finite()).collect();
                    median(&mut col)
                })
                .collect();
            for r in &mut raw {
                for (v, &m) in r.features.iter_mut().zip(&medians) {
                    if !v.is_finite() {
                        *v = m;
                        manifest.imputed_cells += 1;
                    }
                }
            }
            raw
        }
    }
}

/// Median of finite values; 0 for an all-non-finite column.
fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    fn hulk_schema() -> Schema {
        Schema {
            label_column: "Label".into(),
            feature_columns: None,
            exclude_columns: vec![],
            labels: [("BENIGN".to_string(), 0), ("Hulk".to_string(), 1)]
                .into_iter()
                .collect(),
            ignore_labels: vec![],
        }
    }

    #[test]
    fn maps_labels_in_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a, b, Label\n1,2,BENIGN\n3,4,BENIGN\n5,6,Hulk\n");
        let ds = load_flow_csv(&p, &hulk_schema(), CleaningPolicy::Drop).unwrap();
        let labels: Vec<_> = ds.records().iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![0, 0, 1]);
        assert_eq!(ds.feature_count(), 2);
        assert_eq!(ds.records()[2].features, vec![5.0, 6.0]);
    }

    #[test]
    fn drop_policy_counts_infinite_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,Label\n1,2,BENIGN\nInfinity,4,BENIGN\n5,6,Hulk\n");
        let ds = load_flow_csv(&p, &hulk_schema(), CleaningPolicy::Drop).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.manifest().dropped, 1);
        assert_eq!(ds.manifest().rows_read, 3);
        assert_eq!(ds.records()[1].row, 2);
    }

    #[test]
    fn median_policy_imputes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "a.csv",
            "a,b,Label\n1,2,BENIGN\nNaN,4,BENIGN\n5,inf,Hulk\n7,8,BENIGN\n",
        );
        let ds = load_flow_csv(&p, &hulk_schema(), CleaningPolicy::Median).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.manifest().imputed_cells, 2);
        assert_eq!(ds.records()[1].features[0], 5.0);
        assert_eq!(ds.records()[2].features[1], 4.0);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_flow_csv(&missing, &hulk_schema(), CleaningPolicy::Drop),
            Err(Error::Io { .. })
        ));
        let ragged = write(&dir, "r.csv", "a,b,Label\n1,2,BENIGN\n1,BENIGN\n");
        assert!(matches!(
            load_flow_csv(&ragged, &hulk_schema(), CleaningPolicy::Drop),
            Err(Error::ColumnCount { found: 2, .. })
        ));
        let unknown = write(&dir, "u.csv", "a,b,Label\n1,2,Bogus\n");
        assert!(matches!(
            load_flow_csv(&unknown, &hulk_schema(), CleaningPolicy::Drop),
            Err(Error::UnknownLabel { .. })
        ));
        let all_bad = write(&dir, "e.csv", "a,b,Label\nnan,2,BENIGN\n");
        assert!(matches!(
            load_flow_csv(&all_bad, &hulk_schema(), CleaningPolicy::Drop),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn loading_twice_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,Label\n1,2,BENIGN\n3,4,Hulk\n");
        let a = load_flow_csv(&p, &hulk_schema(), CleaningPolicy::Drop).unwrap();
        let b = load_flow_csv(&p, &hulk_schema(), CleaningPolicy::Drop).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cicids_schema_keeps_eleven_attacks() {
        let dir = tempfile::tempdir().unwrap();
        let labels = [
            "BENIGN",
            "Bot",
            "DDoS",
            "DoS GoldenEye",
            "DoS Hulk",
            "DoS Slowhttptest",
            "DoS slowloris",
            "FTP-Patator",
            "Heartbleed",
            "Infiltration",
            "PortScan",
            "SSH-Patator",
            "Web Attack \u{fffd} Brute Force",
            "Web Attack \u{fffd} Sql Injection",
            "Web Attack \u{fffd} XSS",
        ];
        let mut body = String::from(" Flow Duration, Total Fwd Packets, Label\n");
        for (i, l) in labels.iter().enumerate() {
            body.push_str(&format!("{i},{},{l}\n", i * 2));
        }
        let p = write(&dir, "cic.csv", &body);
        let ds = load_flow_csv(&p, &Schema::cicids2017(), CleaningPolicy::Drop).unwrap();
        assert_eq!(ds.attack_classes().len(), 11);
        assert_eq!(ds.manifest().ignored, 3);
        let slowloris = ds.records().iter().find(|r| r.row == 6).unwrap();
        assert_eq!(slowloris.label, 6);
        let portscan = ds.records().iter().find(|r| r.row == 10).unwrap();
        assert_eq!(portscan.label, 8);
    }

    #[test]
    fn schema_rejects_colliding_labels() {
        let mut s = hulk_schema();
        s.labels.insert("hulk".into(), 2);
        assert!(s.validate().is_err());
    }
}
