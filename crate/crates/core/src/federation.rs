//! In-process simulation of federated training: every round broadcasts the
//! global model, trains each node locally from it, and aggregates the local
//! models with sample-count weighted averaging (FedAvg).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset};
use crate::neuralnet::{init_model, train_epochs_logged, ModelArch, ModelParams, TrainConfig};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub rounds: usize,
    /// Expected node count; 0 means "whatever the node list holds".
    pub nodes: usize,
    pub train: TrainConfig,
    pub seed: u64,
    /// Train nodes concurrently within a round. Results are identical either way.
    pub parallel: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            nodes: 0,
            train: TrainConfig::default(),
            seed: 0,
            parallel: true,
        }
    }
}

/// A node's preprocessed local data.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub node_id: usize,
    pub attack_class: ClassId,
    pub data: Dataset,
}

impl NodeState {
    /// Post-preprocessing sample count, the node's FedAvg weight.
    pub fn sample_count(&self) -> usize {
        self.data.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRoundLog {
    pub node_id: usize,
    pub samples: usize,
    pub mean_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub nodes: Vec<NodeRoundLog>,
    /// Where the global model of this round was written, if anywhere.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationOutcome {
    pub global: ModelParams,
    /// Each node's locally trained model from the final round, in node order.
    pub locals: Vec<ModelParams>,
    pub logs: Vec<RoundLog>,
}

/// Seed for a node's local training in a given round.
pub fn local_seed(federation_seed: u64, node_id: usize, round: usize) -> u64 {
    seed::derive(federation_seed, &[node_id as u64, round as u64])
}

/// Trains a copy of `global` on the node's data for `cfg.local_epochs`
/// epochs with a fresh Adam state. Returns the local model, its sample
/// count and the mean training loss.
pub fn local_update(
    node: &NodeState,
    global: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, usize, Option<f64>)> {
    if node.data.feature_count() != global.arch.input_length {
        return Err(Error::Shape(format!(
            "node {} has {} features, global model expects {}",
            node.node_id,
            node.data.feature_count(),
            global.arch.input_length
        )));
    }
    let summary = train_epochs_logged(global, &node.data, cfg)?;
    Ok((summary.params, node.sample_count(), summary.mean_loss))
}

/// Sample-count weighted mean of local models.
///
/// Each element is computed as `min + sum_k (n_k / n) * (w_k - min)` over
/// terms sorted by value, then clamped to `[min, max]`. This makes the
/// result independent of input order and exact when all inputs agree.
pub fn fedavg(updates: &[(ModelParams, usize)]) -> Result<ModelParams> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::Empty("fedavg needs at least one update".into()))?;
    for (p, n) in updates {
        if !p.same_shape(first) {
            return Err(Error::Shape("local models have different shapes".into()));
        }
        if *n == 0 {
            return Err(Error::InvalidSpec("every node needs a positive sample count".into()));
        }
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    let weights: Vec<f64> = updates.iter().map(|(_, n)| *n as f64 / total as f64).collect();

    let mut out = first.clone();
    let mut terms = vec![0.0; updates.len()];
    for (ti, tensor) in out.tensors.iter_mut().enumerate() {
        for (ei, value) in tensor.data.iter_mut().enumerate() {
            let column = updates.iter().map(|(p, _)| p.tensors[ti].data[ei]);
            let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo == hi {
                *value = lo;
                continue;
            }
            for (k, (p, _)) in updates.iter().enumerate() {
                terms[k] = weights[k] * (p.tensors[ti].data[ei] - lo);
            }
            terms.sort_by(f64::total_cmp);
            let mean = lo + terms.iter().sum::<f64>();
            *value = mean.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// Runs `cfg.rounds` rounds starting from `init_model(arch, cfg.seed)`.
pub fn run_federation(nodes: &[NodeState], arch: &ModelArch, cfg: &FederationConfig) -> Result<FederationOutcome> {
    run_federation_with(nodes, arch, cfg, |_, _| Ok(None))
}

/// Like [`run_federation`], calling `on_round(round, global)` after each
/// aggregation; the returned string is recorded as the round's checkpoint.
pub fn run_federation_with<F>(
    nodes: &[NodeState],
    arch: &ModelArch,
    cfg: &FederationConfig,
    mut on_round: F,
) -> Result<FederationOutcome>
where
    F: FnMut(usize, &ModelParams) -> Result<Option<String>>,
{
    if nodes.is_empty() {
        return Err(Error::Empty("federation needs at least one node".into()));
    }
    if cfg.rounds == 0 {
        return Err(Error::InvalidSpec("federation needs at least one round".into()));
    }
    if cfg.nodes != 0 && cfg.nodes != nodes.len() {
        return Err(Error::InvalidSpec(format!(
            "configured for {} nodes, got {}",
            cfg.nodes,
            nodes.len()
        )));
    }
    if let Some(n) = nodes.iter().find(|n| n.sample_count() == 0) {
        return Err(Error::Empty(format!("node {} has no samples", n.node_id)));
    }

    let mut global = init_model(arch, cfg.seed)?;
    let mut logs = Vec::with_capacity(cfg.rounds);
    let mut locals = Vec::new();
    for round in 1..=cfg.rounds {
        let train_one = |node: &NodeState| {
            let local_cfg = TrainConfig {
                seed: local_seed(cfg.seed, node.node_id, round),
                ..cfg.train.clone()
            };
            local_update(node, &global, &local_cfg)
        };
        let results: Vec<_> = if cfg.parallel {
            nodes.par_iter().map(train_one).collect::<Result<_>>()?
        } else {
            nodes.iter().map(train_one).collect::<Result<_>>()?
        };

        let node_logs = nodes
            .iter()
            .zip(&results)
            .map(|(node, (_, n, loss))| NodeRoundLog {
                node_id: node.node_id,
                samples: *n,
                mean_loss: *loss,
            })
            .collect();
        let updates: Vec<(ModelParams, usize)> = results.into_iter().map(|(p, n, _)| (p, n)).collect();
        global = fedavg(&updates)?;
        locals = updates.into_iter().map(|(p, _)| p).collect();
        let checkpoint = on_round(round, &global)?;
        log::debug!("round {round}/{} aggregated", cfg.rounds);
        logs.push(RoundLog {
            round,
            nodes: node_logs,
            checkpoint,
        });
    }
    Ok(FederationOutcome { global, locals, logs })
}
