use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset, BENIGN};
use crate::{Error, Result};

/// One node's private training partition: a contiguous benign block plus
/// every training record of a single attack class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDataset {
    /// 1-based.
    pub node_id: usize,
    pub attack_class: ClassId,
    pub data: Dataset,
}

impl NodeDataset {
    /// Number of local samples, `n_k` in the FedAvg weighting.
    pub fn sample_count(&self) -> usize {
        self.data.len()
    }
}

/// Splits `train` into one node per attack class.
///
/// Benign records are cut into K contiguous blocks in original order (block
/// sizes differ by at most one, earlier nodes get the extra record). Node k
/// receives block k and all records of `attack_classes[k-1]`, interleaved in
/// original order.
pub fn partition_federated(train: &Dataset, attack_classes: &[ClassId]) -> Result<Vec<NodeDataset>> {
    if attack_classes.is_empty() {
        return Err(Error::InvalidSpec("no attack classes to partition".into()));
    }
    let present = train.attack_classes();
    if let Some(&missing) = attack_classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::MissingClass(missing));
    }
    if attack_classes.contains(&BENIGN) {
        return Err(Error::InvalidSpec("benign cannot be a node's attack class".into()));
    }
    let k = attack_classes.len();
    let benign_total = train.benign_count();
    if benign_total == 0 {
        return Err(Error::Empty("training split has no benign records".into()));
    }

    let base = benign_total / k;
    let extra = benign_total % k;
    let block_end: Vec<usize> = (0..k)
        .scan(0, |end, i| {
            *end += base + usize::from(i < extra);
            Some(*end)
        })
        .collect();

    let mut node_records: Vec<Vec<_>> = vec![Vec::new(); k];
    let mut benign_seen = 0;
    for r in train.records() {
        if r.label == BENIGN {
            let node = block_end.partition_point(|&end| end <= benign_seen);
            node_records[node].push(r.clone());
            benign_seen += 1;
        } else if let Some(node) = attack_classes.iter().position(|&c| c == r.label) {
            node_records[node].push(r.clone());
        }
    }

    node_records
        .into_iter()
        .enumerate()
        .map(|(i, records)| {
            let data = train.derive(
                records,
                format!("partition:node{}(attack={})", i + 1, attack_classes[i]),
            )?;
            Ok(NodeDataset {
                node_id: i + 1,
                attack_class: attack_classes[i],
                data,
            })
        })
        .collect()
}
