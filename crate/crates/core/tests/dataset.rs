mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use fedids::dataset::{
    generate_synthetic, load_flow_csv, partition_federated, split, ClassId, CleaningPolicy, Schema, SplitSpec, BENIGN,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn split_sizes_and_order(
        counts in prop::collection::vec(1usize..120, 1..5),
        seed in any::<u64>(),
    ) {
        let labels: Vec<ClassId> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c as ClassId, n))
            .collect();
        let ds = common::random_dataset(&labels, 2, seed);
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        let (train, val, test) = split(&ds, &spec).unwrap();
        prop_assert_eq!(train.len() + val.len() + test.len(), ds.len());
        for part in [&train, &val, &test] {
            let rows: Vec<u64> = part.records().iter().map(|r| r.row).collect();
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
        for (c, &n) in counts.iter().enumerate() {
            let c = c as ClassId;
            for (part, frac) in [(&train, 0.8), (&val, 0.1), (&test, 0.1)] {
                let got = part.class_counts().get(&c).copied().unwrap_or(0) as f64;
                // With 3 or 4 records, one record per split outweighs the rounding bound.
                prop_assert!((got - frac * n as f64).abs() <= 1.0 + 1e-9 || n < 5,
                    "class {} ({} records): {} for fraction {}", c, n, got, frac);
                if n >= 3 {
                    prop_assert!(got >= 1.0);
                }
            }
        }
        let again = split(&ds, &spec).unwrap();
        prop_assert_eq!((&train, &val, &test), (&again.0, &again.1, &again.2));
    }

    #[test]
    fn partition_is_disjoint_exhaustive_and_pure(
        benign in 3usize..200,
        attacks in prop::collection::vec(1usize..20, 1..6),
        seed in any::<u64>(),
    ) {
        let mut labels = vec![BENIGN; benign];
        for (k, &n) in attacks.iter().enumerate() {
            labels.extend(std::iter::repeat_n(k as ClassId + 1, n));
        }
        let ds = common::random_dataset(&labels, 2, seed);
        let classes: Vec<ClassId> = (1..=attacks.len() as ClassId).collect();
        let nodes = partition_federated(&ds, &classes).unwrap();
        prop_assert_eq!(nodes.len(), classes.len());
        let mut seen = BTreeSet::new();
        for (k, node) in nodes.iter().enumerate() {
            prop_assert_eq!(node.node_id, k + 1);
            prop_assert_eq!(node.attack_class, classes[k]);
            prop_assert_eq!(node.sample_count(), node.data.len());
            let share = node.data.benign_count() as f64;
            prop_assert!((share - benign as f64 / classes.len() as f64).abs() < 1.0);
            prop_assert_eq!(node.data.attack_count(), attacks[k]);
            for r in node.data.records() {
                prop_assert!(r.label == BENIGN || r.label == node.attack_class);
                if r.label == BENIGN {
                    prop_assert!(seen.insert(r.row), "benign row {} assigned twice", r.row);
                }
            }
            let rows: Vec<u64> = node.data.records().iter().map(|r| r.row).collect();
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(seen.len(), benign);
    }
}

#[test]
fn split_examples() {
    let mut labels = vec![BENIGN; 80];
    labels.extend([1; 20]);
    let (train, _, _) = split(&common::random_dataset(&labels, 2, 1), &SplitSpec::default()).unwrap();
    assert_eq!(train.class_counts(), BTreeMap::from([(0, 64), (1, 16)]));

    let (a, b, c) = split(&common::random_dataset(&[BENIGN; 10], 1, 1), &SplitSpec::default()).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));

    let bad = SplitSpec {
        train_fraction: 0.9,
        ..SplitSpec::default()
    };
    assert!(split(&common::random_dataset(&[0, 1], 1, 1), &bad).is_err());

    let (train, _, _) = split(
        &common::random_dataset(&[0, 0, 0, 0, 0, 1, 1], 1, 1),
        &SplitSpec::default(),
    )
    .unwrap();
    assert!(!train.manifest().warnings.is_empty());
}

#[test]
fn partition_example() {
    let mut labels = vec![BENIGN; 22];
    labels.extend([1, 1, 2, 2, 2]);
    let nodes = partition_federated(&common::random_dataset(&labels, 2, 1), &[1, 2]).unwrap();
    assert_eq!(nodes[0].data.class_counts(), BTreeMap::from([(0, 11), (1, 2)]));
    assert_eq!(nodes[1].data.class_counts(), BTreeMap::from([(0, 11), (2, 3)]));
    assert!(partition_federated(&common::random_dataset(&labels, 2, 1), &[1, 3]).is_err());
}

#[test]
fn overlapping_classes_share_a_distribution() {
    let f = 4;
    let n = 4000;
    let s = common::spec(
        f,
        vec![
            common::class(0, vec![0.0; f], 100),
            common::class(1, vec![2.0; f], n),
            common::class(2, vec![-2.0; f], n),
            common::class(3, vec![2.0; f], n),
        ],
        vec![[1, 2]],
    );
    let ds = generate_synthetic(&s, 17).unwrap();
    let means = |label: ClassId| -> Vec<f64> {
        let rows: Vec<&Vec<f64>> = ds
            .records()
            .iter()
            .filter(|r| r.label == label)
            .map(|r| &r.features)
            .collect();
        (0..f)
            .map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let (m1, m2, m3) = (means(1), means(2), means(3));
    let stderr = (2.0 / n as f64).sqrt();
    for j in 0..f {
        assert!(
            (m1[j] - m2[j]).abs() < 3.0 * stderr,
            "feature {j}: {} vs {}",
            m1[j],
            m2[j]
        );
        // Class 3 has the same declared mean as 1 but its own stream.
        assert!((m1[j] - m3[j]).abs() < 3.0 * stderr);
    }
    let c = ds.class_counts();
    assert_eq!((c[&1], c[&2]), (n, n));
    assert_eq!(ds, generate_synthetic(&s, 17).unwrap());
    assert_ne!(ds, generate_synthetic(&s, 18).unwrap());
}

#[test]
fn synthetic_counts_and_errors() {
    let s = common::spec(
        4,
        vec![common::class(0, vec![0.0; 4], 10), common::class(1, vec![1.0; 4], 10)],
        vec![],
    );
    let ds = generate_synthetic(&s, 1).unwrap();
    assert_eq!(ds.class_counts(), BTreeMap::from([(0, 10), (1, 10)]));
    let mut bad = s.clone();
    bad.classes[1].scale = 0.0;
    assert!(generate_synthetic(&bad, 1).is_err());
    let mut bad = s;
    bad.overlap = vec![[1, 5]];
    assert!(generate_synthetic(&bad, 1).is_err());
}

#[test]
fn csv_ingestion_round_trip_and_cleaning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flows.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, " Flow Duration, Flow Bytes/s, Label").unwrap();
    writeln!(f, "1,2.5,BENIGN").unwrap();
    writeln!(f, "2,Infinity,BENIGN").unwrap();
    writeln!(f, "3,NaN,DoS Hulk").unwrap();
    writeln!(f, "4,8,DoS Hulk").unwrap();
    writeln!(f, "5,9,Heartbleed").unwrap();
    drop(f);
    let schema = Schema::cicids2017();
    let ds = load_flow_csv(&path, &schema, CleaningPolicy::Drop).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.manifest().dropped, 2);
    assert_eq!(ds.manifest().ignored, 1);
    assert_eq!(ds, load_flow_csv(&path, &schema, CleaningPolicy::Drop).unwrap());

    let imputed = load_flow_csv(&path, &schema, CleaningPolicy::Median).unwrap();
    assert_eq!(imputed.len(), 4);
    assert_eq!(imputed.manifest().imputed_cells, 2);

    let out = dir.path().join("copy.csv");
    let names: BTreeMap<ClassId, String> = [(0, "BENIGN".to_string()), (4, "DoS Hulk".to_string())].into();
    imputed.write_csv(&out, &names).unwrap();
    let written = Schema {
        label_column: "label".into(),
        ..schema.clone()
    };
    let back = load_flow_csv(&out, &written, CleaningPolicy::Drop).unwrap();
    let features = |d: &fedids::dataset::Dataset| {
        d.records()
            .iter()
            .map(|r| (r.features.clone(), r.label))
            .collect::<Vec<_>>()
    };
    assert_eq!(features(&back), features(&imputed));

    let mut bad = std::fs::File::create(dir.path().join("bad.csv")).unwrap();
    writeln!(bad, "a,Label\n1,Worm").unwrap();
    drop(bad);
    assert!(load_flow_csv(&dir.path().join("bad.csv"), &schema, CleaningPolicy::Drop).is_err());
    assert!(load_flow_csv(&dir.path().join("missing.csv"), &schema, CleaningPolicy::Drop).is_err());
}
