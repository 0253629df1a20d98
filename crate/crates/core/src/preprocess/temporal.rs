use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset, FlowRecord};
use crate::{Error, Result};

/// Which records form one averaging stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Each label is its own stream; features never mix across labels.
    #[default]
    PerLabel,
    /// The whole dataset is one stream regardless of labels.
    Mixed,
}

/// Sliding-window mean over the last `window` samples of a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalAverager {
    pub window: usize,
    pub mode: StreamMode,
}

impl Default for TemporalAverager {
    fn default() -> Self {
        Self {
            window: 3,
            mode: StreamMode::PerLabel,
        }
    }
}

/// Replaces each record's features with the mean of itself and the
/// `window - 1` records before it in its stream. The first records of a
/// stream average over what is available. Labels, rows and ordering are
/// unchanged.
pub fn temporal_average(ds: &Dataset, avg: &TemporalAverager) -> Result<Dataset> {
    if avg.window == 0 {
        return Err(Error::InvalidSpec("temporal window must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(Error::Empty("cannot average an empty dataset".into()));
    }
    let records = ds.records();
    let mut streams: BTreeMap<Option<ClassId>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = match avg.mode {
            StreamMode::PerLabel => Some(r.label),
            StreamMode::Mixed => None,
        };
        streams.entry(key).or_default().push(i);
    }

    let f = ds.feature_count();
    let mut averaged: Vec<Option<Vec<f64>>> = vec![None; records.len()];
    for members in streams.values() {
        for (pos, &idx) in members.iter().enumerate() {
            let start = (pos + 1).saturating_sub(avg.window);
            let window = &members[start..=pos];
            let mut mean = vec![0.0; f];
            for &j in window {
                for (m, v) in mean.iter_mut().zip(&records[j].features) {
                    *m += v;
                }
            }
            let count = window.len() as f64;
            mean.iter_mut().for_each(|m| *m /= count);
            averaged[idx] = Some(mean);
        }
    }

    let out = records
        .iter()
        .zip(averaged)
        .map(|(r, mean)| FlowRecord {
            row: r.row,
            features: mean.expect("every record belongs to a stream"),
            label: r.label,
        })
        .collect();
    ds.derive(out, format!("temporal_average(r={}, {:?})", avg.window, avg.mode))
}
