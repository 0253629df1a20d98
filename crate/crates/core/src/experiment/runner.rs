use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Approach, DataSource, EvalTarget, ExperimentConfig};
use super::report::{write_json, ApproachReport, RunReport};
use crate::dataset::{generate_synthetic, load_flow_csvs, partition_federated, split, ClassId, Dataset, BENIGN};
use crate::evaluation::{
    bin_counts, build_matrix, classify_pairs, compare_approaches, occurrence_counts, test_sets_by_attack,
};
use crate::federation::{run_federation_with, FederationConfig, NodeState, RoundLog};
use crate::neuralnet::{init_model, train_epochs, Checkpoint, ModelArch, ModelParams, TrainConfig};
use crate::preprocess::{build_pipeline, FittedPipeline};
use crate::seed::{self, tag};
use crate::{Error, Result};

/// Marker left in the output directory while a run is in progress or
/// after it failed.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Splits shared by every approach.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub attacks: Vec<ClassId>,
    pub names: BTreeMap<ClassId, String>,
}

impl PreparedData {
    pub fn feature_count(&self) -> usize {
        self.train.feature_count()
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (ds, names, requested) = match &cfg.data {
        None => return Err(Error::Config(vec!["data: section is required".into()])),
        Some(DataSource::Csv {
            paths,
            cleaning,
            attacks,
            ..
        }) => {
            let schema = cfg.schema()?;
            let ds = load_flow_csvs(paths, &schema, *cleaning)?;
            let names = schema.labels.iter().map(|(n, &c)| (c, n.clone())).collect();
            (ds, names, attacks.clone())
        }
        Some(DataSource::Synthetic { attacks, .. }) => {
            let spec = cfg
                .synthetic_spec()?
                .ok_or_else(|| Error::Config(vec!["data: synthetic source needs spec_file or spec".into()]))?;
            let ds = generate_synthetic(&spec, seed::derive(cfg.seed, &[tag("data")]))?;
            (ds, spec.class_names(), attacks.clone())
        }
    };
    let split_spec = crate::dataset::SplitSpec {
        seed: seed::derive(cfg.seed, &[tag("split"), cfg.split.seed]),
        ..cfg.split
    };
    let (train, val, test) = split(&ds, &split_spec)?;
    let attacks: Vec<ClassId> = match requested {
        Some(list) => list,
        None => ds.attack_classes().into_iter().collect(),
    };
    if attacks.is_empty() {
        return Err(Error::Empty("no attack classes to study".into()));
    }
    Ok(PreparedData {
        train,
        val,
        test,
        attacks,
        names,
    })
}

fn approach_seed(cfg: &ExperimentConfig, approach: Approach) -> u64 {
    seed::derive(cfg.seed, &[tag(approach.tag())])
}

/// Normalizer fitted on the full training split, shared by every model of
/// the approach.
pub fn fitted_pipeline(cfg: &ExperimentConfig, data: &PreparedData, approach: Approach) -> Result<FittedPipeline> {
    let mut pcfg = cfg.pipeline_for(approach);
    pcfg.seed = seed::derive(approach_seed(cfg, approach), &[tag("pipeline"), pcfg.seed]);
    build_pipeline(&pcfg)?.fit(&data.train)
}

#[derive(Clone, Debug)]
pub struct CentralOutcome {
    pub models: BTreeMap<ClassId, ModelParams>,
    /// Class histogram of each model's training set after preprocessing.
    pub seen: BTreeMap<ClassId, BTreeMap<ClassId, usize>>,
    pub pipeline: FittedPipeline,
}

/// One model per attack class, trained on all benign training records plus
/// that class.
pub fn run_centralized(cfg: &ExperimentConfig, data: &PreparedData) -> Result<CentralOutcome> {
    let approach = Approach::Central;
    let pipeline = fitted_pipeline(cfg, data, approach)?;
    let arch = cfg.model.arch(data.feature_count());
    let base = approach_seed(cfg, approach);
    let mut models = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for &k in &data.attacks {
        let subset = data.train.filter_labels(&[BENIGN, k], format!("central[{k}]"))?;
        if subset.attack_count() == 0 {
            return Err(Error::MissingClass(k));
        }
        let train_set = pipeline.transform_train(&subset, k as u64)?;
        let init = init_model(&arch, seed::derive(base, &[tag("init"), k as u64]))?;
        let tcfg = TrainConfig {
            local_epochs: cfg.central_epochs(),
            seed: seed::derive(base, &[tag("train"), cfg.train.seed, k as u64]),
            ..cfg.train.clone()
        };
        log::info!("central: attack {k}, {} records", train_set.len());
        models.insert(k, train_epochs(&init, &train_set, &tcfg)?);
        seen.insert(k, train_set.class_counts());
    }
    Ok(CentralOutcome { models, seen, pipeline })
}

#[derive(Clone, Debug)]
pub struct FederatedOutcome {
    /// Final local model of each node, keyed by the node's attack class.
    pub locals: BTreeMap<ClassId, ModelParams>,
    pub global: ModelParams,
    pub logs: Vec<RoundLog>,
    pub node_samples: BTreeMap<ClassId, usize>,
    pub pipeline: FittedPipeline,
}

/// Partitions the training split into one node per attack class, runs the
/// approach's pipeline on every node and federates them.
pub fn run_federated(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    approach: Approach,
    checkpoint_dir: Option<&Path>,
) -> Result<FederatedOutcome> {
    if !approach.is_federated() {
        return Err(Error::InvalidSpec(format!("{approach} is not a federated approach")));
    }
    let pipeline = fitted_pipeline(cfg, data, approach)?;
    let parts = partition_federated(&data.train, &data.attacks)?;
    let nodes: Vec<NodeState> = parts
        .into_iter()
        .map(|p| {
            let prepared = pipeline.transform_train(&p.data, p.node_id as u64)?;
            Ok(NodeState {
                node_id: p.node_id,
                attack_class: p.attack_class,
                data: prepared,
            })
        })
        .collect::<Result<_>>()?;
    let node_samples = nodes.iter().map(|n| (n.attack_class, n.sample_count())).collect();

    let base = approach_seed(cfg, approach);
    let fed_cfg = FederationConfig {
        rounds: cfg.federation.rounds,
        nodes: cfg.federation.nodes,
        train: cfg.train.clone(),
        seed: seed::derive(base, &[tag("federation"), cfg.federation.seed, cfg.train.seed]),
        parallel: cfg.federation.parallel,
    };
    let arch: ModelArch = cfg.model.arch(data.feature_count());
    let rounds = cfg.federation.rounds;
    let every = cfg.checkpoint_every;
    let outcome = run_federation_with(&nodes, &arch, &fed_cfg, |round, global| {
        let Some(dir) = checkpoint_dir else { return Ok(None) };
        let due = round == rounds || (every > 0 && round % every == 0);
        if !due {
            return Ok(None);
        }
        let name = format!("round_{round:03}.ckpt");
        Checkpoint {
            round: round as u64,
            seed: fed_cfg.seed,
            params: global.clone(),
        }
        .write(&dir.join(&name))?;
        Ok(Some(format!("checkpoints/{name}")))
    })?;
    log::info!("{approach}: {rounds} rounds over {} nodes done", nodes.len());
    let locals = nodes
        .iter()
        .zip(outcome.locals)
        .map(|(n, p)| (n.attack_class, p))
        .collect();
    Ok(FederatedOutcome {
        locals,
        global: outcome.global,
        logs: outcome.logs,
        node_samples,
        pipeline,
    })
}

/// Models that score each matrix row, per the configured evaluation target.
fn scoring_models(cfg: &ExperimentConfig, out: &FederatedOutcome) -> BTreeMap<ClassId, ModelParams> {
    match cfg.evaluate {
        EvalTarget::Local => out.locals.clone(),
        EvalTarget::Global => out.locals.keys().map(|&k| (k, out.global.clone())).collect(),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one approach and writes its artifacts under `dir`.
pub fn run_approach(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    approach: Approach,
    dir: &Path,
) -> Result<ApproachReport> {
    let started = Instant::now();
    let ckpt_dir = dir.join("checkpoints");
    if ckpt_dir.exists() {
        fs::remove_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    }
    ensure_dir(&ckpt_dir)?;
    let test_sets = test_sets_by_attack(&data.test, &data.attacks)?;

    let (matrix, stages, node_samples, logs) = if approach.is_federated() {
        let out = run_federated(cfg, data, approach, Some(&ckpt_dir))?;
        let matrix = build_matrix(&scoring_models(cfg, &out), &test_sets, &out.pipeline, approach.tag())?;
        write_json(&dir.join("rounds.json"), &out.logs)?;
        let stages = out.pipeline.pipeline.stage_names();
        (matrix, stages, out.node_samples, out.logs.len())
    } else {
        let out = run_centralized(cfg, data)?;
        for (k, params) in &out.models {
            Checkpoint {
                round: 0,
                seed: approach_seed(cfg, approach),
                params: params.clone(),
            }
            .write(&ckpt_dir.join(format!("attack_{k:02}.ckpt")))?;
        }
        let matrix = build_matrix(&out.models, &test_sets, &out.pipeline, approach.tag())?;
        let samples = out.seen.iter().map(|(&k, h)| (k, h.values().sum())).collect();
        (matrix, out.pipeline.pipeline.stage_names(), samples, 0)
    };

    let pairs = classify_pairs(&matrix, cfg.threshold);
    write_text(&dir.join("matrix.csv"), &matrix.to_csv())?;
    write_text(&dir.join("recall.csv"), &matrix.recall_csv())?;
    write_json(&dir.join("pairs.json"), &pairs)?;
    let report = ApproachReport {
        approach,
        bins: bin_counts(&pairs),
        occurrences: occurrence_counts(pairs.iter().map(|p| (p.train, p.test)), &matrix.attacks),
        localized: matrix.localized().into_iter().collect(),
        mean_localized: matrix.mean_localized(),
        stages: stages.into_iter().map(String::from).collect(),
        train_samples: node_samples,
        rounds: logs,
        seconds: started.elapsed().as_secs_f64(),
        matrix,
        pairs,
    };
    Ok(report)
}

/// Runs every configured approach in order and writes all artifacts.
pub fn run_all(cfg: &ExperimentConfig) -> Result<RunReport> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let out_dir: PathBuf = cfg.output_dir.clone();
    ensure_dir(&out_dir)?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    write_text(&marker, "run in progress or failed; artifacts here may be partial\n")?;
    let snapshot = cfg.snapshot()?;
    write_text(&out_dir.join("config_snapshot.toml"), &snapshot)?;

    let data = prepare_data(cfg).map_err(|e| e.in_stage("data"))?;
    write_json(
        &out_dir.join("data_manifest.json"),
        &DataManifest {
            attacks: data.attacks.clone(),
            names: data.names.clone(),
            train: data.train.class_counts(),
            val: data.val.class_counts(),
            test: data.test.class_counts(),
            source: data.train.manifest().clone(),
        },
    )?;

    let mut approaches = Vec::with_capacity(cfg.approaches.len());
    for &approach in &cfg.approaches {
        let dir = out_dir.join(approach.tag());
        ensure_dir(&dir)?;
        log::info!("running {approach}");
        let report = run_approach(cfg, &data, approach, &dir).map_err(|e| e.in_stage(approach.tag()))?;
        approaches.push(report);
    }

    let matrices: Vec<_> = approaches.iter().map(|r| r.matrix.clone()).collect();
    let overlap = compare_approaches(&matrices, cfg.threshold)?;
    let union = occurrence_counts(overlap.distinct_pairs(), &data.attacks);
    let report = RunReport {
        master_seed: cfg.seed,
        threshold: cfg.threshold,
        attacks: data.attacks.clone(),
        names: data.names.clone(),
        approaches,
        overlap,
        union_occurrences: union,
        config_snapshot: snapshot,
    };
    report.write_all(&out_dir)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(report)
}

#[derive(Serialize, Deserialize)]
struct DataManifest {
    attacks: Vec<ClassId>,
    names: BTreeMap<ClassId, String>,
    train: BTreeMap<ClassId, usize>,
    val: BTreeMap<ClassId, usize>,
    test: BTreeMap<ClassId, usize>,
    source: crate::dataset::Manifest,
}
