mod common;

use std::collections::BTreeMap;

use fedids::dataset::{generate_synthetic, split, ClassId, Dataset, SplitSpec};
use fedids::evaluation::{build_matrix, test_sets_by_attack};
use fedids::federation::{fedavg, local_seed, local_update, run_federation, FederationConfig, NodeState};
use fedids::neuralnet::{init_model, loss, train_epochs, Mode, ModelArch, ModelParams, TrainConfig};
use fedids::preprocess::{build_pipeline, PipelineConfig};
use proptest::prelude::*;
use rand::Rng;

fn arch() -> ModelArch {
    ModelArch::with_widths(12, [3, 3, 3, 4], 5)
}

fn random_params(seed: u64) -> ModelParams {
    let mut p = init_model(&arch(), seed).unwrap();
    let mut r = common::rng(seed);
    p.tensors
        .iter_mut()
        .for_each(|t| t.data.iter_mut().for_each(|v| *v = r.random_range(-3.0..3.0)));
    p
}

fn weighted_oracle(updates: &[(ModelParams, usize)]) -> Vec<f64> {
    let n: f64 = updates.iter().map(|(_, k)| *k as f64).sum();
    let flat: Vec<Vec<f64>> = updates.iter().map(|(p, _)| p.values().collect()).collect();
    (0..flat[0].len())
        .map(|i| {
            updates
                .iter()
                .zip(&flat)
                .map(|((_, k), w)| *k as f64 * w[i])
                .sum::<f64>()
                / n
        })
        .collect()
}

proptest! {
    #[test]
    fn fedavg_matches_weighted_mean(seed in any::<u64>(), counts in prop::collection::vec(1usize..5000, 5)) {
        let updates: Vec<(ModelParams, usize)> =
            counts.iter().enumerate().map(|(i, &n)| (random_params(seed.wrapping_add(i as u64)), n)).collect();
        let before = updates.clone();
        let avg = fedavg(&updates).unwrap();
        prop_assert_eq!(&updates, &before);
        for (got, want) in avg.values().zip(weighted_oracle(&updates)) {
            prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
        }
    }

    #[test]
    fn fedavg_is_permutation_invariant_and_convex(seed in any::<u64>(), counts in prop::collection::vec(1usize..100, 2..7)) {
        let updates: Vec<(ModelParams, usize)> =
            counts.iter().enumerate().map(|(i, &n)| (random_params(seed ^ (i as u64 * 977)), n)).collect();
        let avg = fedavg(&updates).unwrap();
        let mut reversed = updates.clone();
        reversed.reverse();
        reversed.rotate_left(1);
        prop_assert_eq!(&fedavg(&reversed).unwrap(), &avg);
        let flat: Vec<Vec<f64>> = updates.iter().map(|(p, _)| p.values().collect()).collect();
        for (i, v) in avg.values().enumerate() {
            let lo = flat.iter().map(|w| w[i]).fold(f64::INFINITY, f64::min);
            let hi = flat.iter().map(|w| w[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn equal_counts_give_the_plain_mean(seed in any::<u64>(), k in 1usize..6, n in 1usize..1000) {
        let updates: Vec<(ModelParams, usize)> = (0..k).map(|i| (random_params(seed ^ i as u64), n)).collect();
        let avg = fedavg(&updates).unwrap();
        let flat: Vec<Vec<f64>> = updates.iter().map(|(p, _)| p.values().collect()).collect();
        for (i, v) in avg.values().enumerate() {
            let mean = flat.iter().map(|w| w[i]).sum::<f64>() / k as f64;
            prop_assert!((v - mean).abs() < 1e-12);
        }
    }
}

fn node(id: usize, attack: ClassId, data: Dataset) -> NodeState {
    NodeState {
        node_id: id,
        attack_class: attack,
        data,
    }
}

fn separable(seed: u64, attack: ClassId, n: usize) -> Dataset {
    let mut r = common::rng(seed);
    common::dataset(
        (0..n)
            .map(|i| {
                let label = if i % 4 == 0 { attack } else { 0 };
                let base = if label == 0 { 0.3 } else { 0.7 };
                ((0..12).map(|_| base + r.random_range(-0.25..0.25)).collect(), label)
            })
            .collect(),
    )
}

fn fed_cfg(rounds: usize, local_epochs: usize, parallel: bool) -> FederationConfig {
    FederationConfig {
        rounds,
        nodes: 0,
        train: TrainConfig {
            local_epochs,
            batch_size: 8,
            ..TrainConfig::default()
        },
        seed: 11,
        parallel,
    }
}

#[test]
fn single_node_equals_centralized_training_with_per_round_reset() {
    let data = separable(1, 1, 64);
    let cfg = fed_cfg(4, 2, true);
    let out = run_federation(&[node(1, 1, data.clone())], &arch(), &cfg).unwrap();

    let mut central = init_model(&arch(), cfg.seed).unwrap();
    for round in 1..=cfg.rounds {
        let tcfg = TrainConfig {
            seed: local_seed(cfg.seed, 1, round),
            ..cfg.train.clone()
        };
        central = train_epochs(&central, &data, &tcfg).unwrap();
    }
    assert_eq!(out.global, central);
    assert_eq!(out.locals, vec![central]);
}

#[test]
fn zero_local_epochs_keeps_the_initial_model() {
    let out = run_federation(&[node(1, 1, separable(2, 1, 16))], &arch(), &fed_cfg(1, 0, false)).unwrap();
    assert_eq!(out.global, init_model(&arch(), 11).unwrap());
    let global = random_params(3);
    let (p, n, _) = local_update(&node(1, 1, separable(2, 1, 16)), &global, &fed_cfg(1, 0, false).train).unwrap();
    assert_eq!((p, n), (global, 16));
}

#[test]
fn parallel_and_sequential_runs_agree_bitwise() {
    let nodes: Vec<NodeState> = (1..=4)
        .map(|k| node(k, k as ClassId, separable(k as u64, k as ClassId, 40)))
        .collect();
    let par = run_federation(&nodes, &arch(), &fed_cfg(3, 1, true)).unwrap();
    let seq = run_federation(&nodes, &arch(), &fed_cfg(3, 1, false)).unwrap();
    assert_eq!(par, seq);
    let rounds: Vec<usize> = par.logs.iter().map(|l| l.round).collect();
    assert_eq!(rounds, vec![1, 2, 3]);
    assert!(par.logs.iter().all(|l| l.nodes.len() == 4));
}

#[test]
fn identical_nodes_produce_identical_local_models() {
    let data = separable(5, 1, 40);
    let global = init_model(&arch(), 1).unwrap();
    let cfg = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    let a = local_update(&node(1, 1, data.clone()), &global, &cfg).unwrap();
    let b = local_update(&node(2, 1, data), &global, &cfg).unwrap();
    assert_eq!(a.0, b.0);
}

#[test]
fn local_epoch_does_not_increase_node_loss() {
    let data = separable(6, 1, 200);
    let global = init_model(&arch(), 2).unwrap();
    let refs: Vec<&[f64]> = data.records().iter().map(|r| r.features.as_slice()).collect();
    let ys = fedids::neuralnet::binary_labels(&data);
    let before = loss(&global, &refs, &ys, Mode::Eval, 0).unwrap();
    let (local, _, _) = local_update(&node(1, 1, data.clone()), &global, &TrainConfig::default()).unwrap();
    let after = loss(&local, &refs, &ys, Mode::Eval, 0).unwrap();
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn errors_are_reported() {
    assert!(run_federation(&[], &arch(), &fed_cfg(1, 1, true)).is_err());
    let wide = common::random_dataset(&[0, 1], 20, 1);
    assert!(run_federation(&[node(1, 1, wide)], &arch(), &fed_cfg(1, 1, true)).is_err());
    let mut cfg = fed_cfg(1, 1, true);
    cfg.nodes = 3;
    assert!(run_federation(&[node(1, 1, separable(1, 1, 8))], &arch(), &cfg).is_err());
}

#[test]
fn two_overlapping_nodes_detect_each_other() {
    let f = 12;
    let hot = common::mean_vec(f, &[0, 1, 2, 3], 3.0);
    let s = common::spec(
        f,
        vec![
            common::class(0, vec![0.0; f], 1600),
            common::class(1, hot.clone(), 300),
            common::class(2, hot, 300),
        ],
        vec![[1, 2]],
    );
    let ds = generate_synthetic(&s, 3).unwrap();
    let (train, _, test) = split(&ds, &SplitSpec::default()).unwrap();
    let pipeline = build_pipeline(&PipelineConfig::default()).unwrap().fit(&train).unwrap();
    let parts = fedids::dataset::partition_federated(&train, &[1, 2]).unwrap();
    let nodes: Vec<NodeState> = parts
        .into_iter()
        .map(|p| {
            node(
                p.node_id,
                p.attack_class,
                pipeline.transform_train(&p.data, p.node_id as u64).unwrap(),
            )
        })
        .collect();
    let cfg = FederationConfig {
        rounds: 10,
        train: TrainConfig {
            local_epochs: 5,
            ..TrainConfig::default()
        },
        seed: 1,
        ..FederationConfig::default()
    };
    let out = run_federation(&nodes, &ModelArch::with_widths(f, [4, 4, 4, 8], 8), &cfg).unwrap();
    let models: BTreeMap<ClassId, ModelParams> = [(1, out.global.clone()), (2, out.global)].into();
    let m = build_matrix(&models, &test_sets_by_attack(&test, &[1, 2]).unwrap(), &pipeline, "fed").unwrap();
    for (train_attack, test_attack) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        let v = m.get(train_attack, test_attack).unwrap();
        assert!(v > 0.7, "cell ({train_attack}, {test_attack}) = {v}");
    }
}
