mod common;

use brainscale::classify::*;
use brainscale::data::{Label, NetworkId};
use brainscale::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn labels(n0: usize, n1: usize) -> Vec<Label> {
    std::iter::repeat_n(Label::Class0, n0).chain(std::iter::repeat_n(Label::Class1, n1)).collect()
}

fn noise_features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn params(trees: usize, seed: u64) -> CvParams {
    CvParams {
        folds: 10,
        ensemble: EnsembleParams {
            trees,
            seed,
            ..Default::default()
        },
        aggregation: Aggregation::Pooled,
    }
}

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Class0), Just(Label::Class1)]
}

proptest! {
    #[test]
    fn split_search_matches_exhaustive_oracle(
        rows in (1usize..4).prop_flat_map(|d| prop::collection::vec(
            (prop::collection::vec((-4i32..4).prop_map(f64::from), d), label_strategy()), 2..20)),
        min_leaf in 1usize..4,
    ) {
        let (x, y): (Vec<Vec<f64>>, Vec<Label>) = rows.into_iter().unzip();
        let idx: Vec<usize> = (0..x.len()).collect();
        let found = best_split(&x, &y, &idx, min_leaf);
        let oracle = common::exhaustive_split(&x, &y, min_leaf);
        match (found, oracle) {
            (Some(s), Some((f, t, g))) => {
                prop_assert_eq!(s.feature, f);
                prop_assert_eq!(s.threshold, t);
                prop_assert!((s.gain - g).abs() < 1e-12);
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "library {:?} vs oracle {:?}", a, b),
        }
    }

    #[test]
    fn folds_partition_and_stratify(n0 in 10usize..60, n1 in 10usize..60, k in 2usize..11, seed in any::<u64>()) {
        let y = labels(n0, n1);
        let a = stratified_folds(&y, k, seed).unwrap();
        prop_assert_eq!(a.len(), y.len());
        let sizes: Vec<usize> = (0..k).map(|f| a.iter().filter(|&&v| v == f).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for class in [Label::Class0, Label::Class1] {
            let per: Vec<usize> = (0..k).map(|f| (0..y.len()).filter(|&i| a[i] == f && y[i] == class).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(a, stratified_folds(&y, k, seed).unwrap());
    }

    #[test]
    fn pure_leaves_fit_training_data(rows in prop::collection::vec((prop::collection::vec(-100.0f64..100.0, 2), label_strategy()), 1..40)) {
        let (x, y): (Vec<Vec<f64>>, Vec<Label>) = rows.into_iter().unzip();
        let idx: Vec<usize> = (0..x.len()).collect();
        let tree = DecisionTree::fit(&x, &y, &idx, TreeParams::default()).unwrap();
        // continuous draws never repeat, so every sample can be isolated
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert_eq!(tree.predict(xi), *yi);
        }
    }
}

#[test]
fn too_few_per_class_for_folds() {
    let y = labels(30, 7);
    assert!(matches!(
        stratified_folds(&y, 10, 1),
        Err(Error::TooFewSamples { class: 1, count: 7, needed: 10 })
    ));
    assert!(matches!(stratified_folds(&y, 1, 1), Err(Error::InvalidParams(_))));
}

#[test]
fn leaked_label_is_learned_perfectly() {
    let y = labels(50, 50);
    let mut x = noise_features(100, 5, 3);
    for (row, label) in x.iter_mut().zip(&y) {
        row.push(f64::from(label.as_u8()));
    }
    let r = cross_validate(&x, &y, params(50, 42)).unwrap();
    assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn separated_blobs_are_learned_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = labels(50, 50);
    // unit-width boxes whose nearest faces are 4 widths apart
    let x: Vec<Vec<f64>> = y
        .iter()
        .map(|l| {
            let offset = 5.0 * f64::from(l.as_u8());
            (0..3).map(|_| offset + rng.random_range(0.0..1.0)).collect()
        })
        .collect();
    let r = cross_validate(&x, &y, params(25, 1)).unwrap();
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let mut accs = Vec::new();
    for seed in 0..8 {
        let x = noise_features(100, 10, seed);
        let mut y = labels(50, 50);
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 100));
        accs.push(cross_validate(&x, &y, params(50, seed)).unwrap().accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((0.4..=0.6).contains(&mean), "{accs:?}");
}

#[test]
fn results_are_reproducible_and_schedule_independent() {
    let x = noise_features(60, 4, 9);
    let y = labels(30, 30);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cross_validate(&x, &y, params(40, 5)).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(3));
    assert_ne!(a, cross_validate(&x, &y, params(40, 6)).unwrap());
}

#[test]
fn single_tree_ensemble_is_its_bootstrap_tree() {
    let x = noise_features(40, 3, 2);
    let y = labels(20, 20);
    let p = EnsembleParams {
        trees: 1,
        seed: 77,
        ..Default::default()
    };
    let ens = BaggedEnsemble::fit(&x, &y, p).unwrap();
    let idx = &bootstrap_indices(40, 1, 77, 0)[0];
    let tree = DecisionTree::fit(&x, &y, idx, TreeParams::default()).unwrap();
    assert_eq!(ens.trees(), std::slice::from_ref(&tree));
    for row in &x {
        assert_eq!(ens.predict(row), tree.predict(row));
    }
}

#[test]
fn depth_limit_is_respected() {
    let x = noise_features(80, 4, 12);
    let y: Vec<Label> = (0..80).map(|i| if i % 3 == 0 { Label::Class1 } else { Label::Class0 }).collect();
    let idx: Vec<usize> = (0..80).collect();
    for depth in 0..4 {
        let tree = DecisionTree::fit(
            &x,
            &y,
            &idx,
            TreeParams {
                max_depth: Some(depth),
                min_leaf: 1,
            },
        )
        .unwrap();
        assert!(tree.depth() <= depth);
        assert_eq!(tree.leaf_count(), tree.node_count().div_ceil(2));
    }
}

#[test]
fn per_fold_mean_averages_fold_metrics() {
    let x = noise_features(60, 4, 1);
    let y = labels(30, 30);
    let mut p = params(30, 3);
    p.aggregation = Aggregation::PerFoldMean;
    let r = cross_validate(&x, &y, p).unwrap();
    let mean_acc = r.per_fold.iter().map(|f| f.metrics.accuracy).sum::<f64>() / 10.0;
    assert!((r.accuracy - mean_acc).abs() < 1e-15);
    assert_eq!(r.per_fold.iter().map(|f| f.test_size).sum::<usize>(), 60);
    assert_eq!(r.confusion.total(), 60);
    assert_eq!(MetricsReport::CSV_HEADER, ["Precision", "Recall", "F1 Score", "Accuracy"]);
    assert!(r.csv_row().iter().all(|c| c.split('.').nth(1).is_some_and(|d| d.len() == 4)));
}

#[test]
fn feature_table_csv_round_trip() {
    let rows: Vec<FeatureRow> = (0..6)
        .map(|i| FeatureRow {
            subject: format!("s{i:03}"),
            label: if i < 3 { Label::Class0 } else { Label::Class1 },
            values: vec![i as f64 / 7.0, -1e-300, 12345.678],
        })
        .collect();
    let table = FeatureTable::new(FeatureKind::LeadingEigenvector, NetworkId::Frontoparietal, rows).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    table.write_csv(&path).unwrap();
    let back = FeatureTable::read_csv(&path).unwrap();
    assert_eq!(back, table);
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "subject,label,network,feature_kind,f1,f2,f3");
}
