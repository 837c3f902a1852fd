mod common;

use std::collections::HashMap;

use fedmsa_core::cart::{best_split, build_tree, build_tree_traced, tree_leaf, with_row, SplitOptions, TreeConfig, TreeNode};
use fedmsa_core::dataio::{
    fit_pca, generate_synthetic, partition_horizontal, partition_vertical, read_csv, write_csv, CsvSchema, PcaOptions, PcaTarget,
    MISSING,
};
use fedmsa_core::markov::{angular_distance_deg, compare_matrices, dbscan, fit_markov};
use fedmsa_core::metrics::{auc, confusion, f1, mcc, pre, recall, stability, acc};
use fedmsa_core::svm::{svm_objective, svm_predict_dataset, svm_score, svm_train, LinearModel, SvmConfig};
use fedmsa_core::{Dataset, SyntheticSpec};
use proptest::prelude::*;
use rand::Rng;

fn dataset_strategy(max_n: usize, max_p: usize, missing: bool) -> impl Strategy<Value = Dataset> {
    (1..=max_n, 1..=max_p).prop_flat_map(move |(n, p)| {
        let cell = if missing {
            prop_oneof![9 => -1e6f64..1e6, 1 => Just(MISSING)].boxed()
        } else {
            (-1e6f64..1e6).boxed()
        };
        (
            proptest::collection::vec(cell, n * p),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0.0f64..10.0, n),
        )
            .prop_map(move |(features, labels, mut gaps)| {
                let mut t = 0.0;
                for g in gaps.iter_mut() {
                    t += *g;
                    *g = t;
                }
                Dataset::new(
                    (0..n as u64).map(|i| i * 3 + 1).collect(),
                    gaps,
                    features,
                    labels,
                    (0..p).map(|j| format!("c{j}")).collect(),
                )
                .unwrap()
            })
    })
}

fn grid_dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        (proptest::collection::vec(0u32..12, n * p), proptest::collection::vec(0u8..2, n)).prop_map(move |(cells, labels)| {
            Dataset::new(
                (0..n as u64).collect(),
                (0..n).map(|i| i as f64).collect(),
                cells.into_iter().map(common::grid).collect(),
                labels,
                (0..p).map(|j| format!("g{j}")).collect(),
            )
            .unwrap()
        })
    })
}

fn csv_text(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(d, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(d in dataset_strategy(30, 5, true)) {
        let text = csv_text(&d);
        let back = read_csv(text.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert!(back.same_content(&d));
        prop_assert_eq!(csv_text(&back), text);
    }

    #[test]
    fn horizontal_partition_preserves_the_multiset(d in dataset_strategy(40, 3, false), k_pick in 0usize..1000, seed in any::<u64>(), stratified in any::<bool>()) {
        let k = 1 + k_pick % d.n_samples();
        let part = partition_horizontal(&d, k, seed, stratified).unwrap();
        prop_assert_eq!(part.k(), k);
        let mut got: Vec<(u64, u8)> = part.clients.iter().flat_map(|c| c.ids().iter().copied().zip(c.labels().iter().copied())).collect();
        let mut want: Vec<(u64, u8)> = d.ids().iter().copied().zip(d.labels().iter().copied()).collect();
        got.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(got, want);
        let sizes: Vec<usize> = part.clients.iter().map(|c| c.n_samples()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn vertical_partition_merges_back(d in dataset_strategy(30, 8, true), cuts in proptest::collection::vec(any::<bool>(), 8)) {
        let names = d.feature_names();
        let mut groups: Vec<Vec<String>> = vec![vec![names[0].clone()]];
        for (j, name) in names.iter().enumerate().skip(1) {
            if cuts[j] {
                groups.push(Vec::new());
            }
            groups.last_mut().unwrap().push(name.clone());
        }
        let merged = partition_vertical(&d, &groups).unwrap().merge().unwrap();
        prop_assert!(merged.same_content(&d));
    }

    #[test]
    fn split_never_worsens_impurity(d in grid_dataset(60, 4), min_leaf in 1usize..4) {
        let rows: Vec<usize> = (0..d.n_samples()).collect();
        let features: Vec<usize> = (0..d.n_features()).collect();
        if let Some(s) = best_split(&d, &rows, &features, &SplitOptions { threshold_cap: None, min_samples_leaf: min_leaf }).unwrap() {
            prop_assert!(s.weighted_gini <= s.parent_gini);
            prop_assert!(s.left_counts.iter().sum::<usize>() >= min_leaf);
            prop_assert!(s.right_counts.iter().sum::<usize>() >= min_leaf);
        }
    }

    #[test]
    fn monotone_transform_keeps_routing(d in grid_dataset(80, 4), col in 0usize..4, depth in 1usize..6) {
        let col = col % d.n_features();
        let transformed: Vec<f64> = (0..d.n_samples())
            .flat_map(|i| (0..d.n_features()).map(move |j| (i, j)))
            .map(|(i, j)| if j == col { (d.value(i, j) * 0.7).exp() - 3.0 } else { d.value(i, j) })
            .collect();
        let t = Dataset::new(d.ids().to_vec(), d.timestamps().to_vec(), transformed, d.labels().to_vec(), d.feature_names().to_vec()).unwrap();
        let rows: Vec<usize> = (0..d.n_samples()).collect();
        let features: Vec<usize> = (0..d.n_features()).collect();
        let cfg = TreeConfig { max_depth: depth, min_samples_leaf: 1, threshold_cap: None };
        let (_, a) = build_tree_traced(&d, &rows, &features, None, &cfg).unwrap();
        let (_, b) = build_tree_traced(&t, &rows, &features, None, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn training_samples_reach_leaves_that_count_them(d in grid_dataset(80, 4), depth in 1usize..7) {
        let rows: Vec<usize> = (0..d.n_samples()).collect();
        let features: Vec<usize> = (0..d.n_features()).collect();
        let cfg = TreeConfig { max_depth: depth, min_samples_leaf: 1, threshold_cap: None };
        let tree = build_tree(&d, &rows, &features, None, &cfg).unwrap();
        let mut tally: HashMap<String, [usize; 2]> = HashMap::new();
        for i in 0..d.n_samples() {
            let (leaf, path) = with_row(&d, i, |x| tree_leaf(&tree, x).map(|(l, p)| (l.clone(), p))).unwrap();
            let TreeNode::Leaf { class_counts, .. } = leaf else { unreachable!() };
            prop_assert!(class_counts[d.labels()[i] as usize] >= 1);
            tally.entry(path).or_insert([0, 0])[d.labels()[i] as usize] += 1;
        }
        prop_assert_eq!(tally.len(), tree.n_leaves());
    }

    #[test]
    fn score_minus_intercept_is_linear(w in proptest::collection::vec(-5.0f64..5.0, 1..6), b in -3.0f64..3.0, a in -4.0f64..4.0, seed in any::<u64>()) {
        let p = w.len();
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..p).map(|_| r.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..p).map(|_| r.random_range(-10.0..10.0)).collect();
        let m = LinearModel { weights: w, intercept: b };
        let f = |v: &[f64]| svm_score(&m, v).unwrap() - b;
        let sum: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u + v).collect();
        let scaled: Vec<f64> = x.iter().map(|u| a * u).collect();
        prop_assert!((f(&sum) - f(&x) - f(&y)).abs() < 1e-9);
        prop_assert!((f(&scaled) - a * f(&x)).abs() < 1e-9);
    }

    #[test]
    fn pca_reconstruction_error_decreases_with_q(seed in any::<u64>(), n in 5usize..40, p in 1usize..6, rank in 1usize..6) {
        // data of rank ≤ `rank` around a random mean
        let rank = rank.min(p);
        let mut r = common::rng(seed);
        let basis: Vec<Vec<f64>> = (0..rank).map(|_| (0..p).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let mean: Vec<f64> = (0..p).map(|_| r.random_range(-5.0..5.0)).collect();
        let mut features = Vec::new();
        for _ in 0..n {
            let coef: Vec<f64> = (0..rank).map(|_| r.random_range(-3.0..3.0)).collect();
            features.extend((0..p).map(|j| mean[j] + (0..rank).map(|k| coef[k] * basis[k][j]).sum::<f64>()));
        }
        let d = Dataset::new((0..n as u64).collect(), (0..n).map(|i| i as f64).collect(), features, vec![0; n], (0..p).map(|j| format!("v{j}")).collect()).unwrap();
        let err = |q: usize| -> Option<f64> {
            let m = fit_pca(&d, PcaOptions::new(PcaTarget::Components(q))).ok()?;
            Some((0..n).map(|i| {
                let back = m.reconstruct_row(&m.project_row(d.row(i)));
                back.iter().zip(d.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }).sum::<f64>())
        };
        let errs: Vec<Option<f64>> = (1..=p).map(err).collect();
        if errs.iter().all(Option::is_some) {
            let errs: Vec<f64> = errs.into_iter().flatten().collect();
            let scale = d.features().iter().map(|v| v * v).sum::<f64>().max(1.0);
            for w in errs.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * scale);
            }
            let true_rank = rank.min(n - 1);
            prop_assert!(errs[true_rank - 1] < 1e-8 * scale, "{:?}", errs);
        }
    }

    #[test]
    fn mcc_polarity(gt in proptest::collection::vec(0u8..2, 1..50), flips in proptest::collection::vec(any::<bool>(), 50)) {
        let pred: Vec<u8> = gt.iter().zip(&flips).map(|(&g, &f)| if f { 1 - g } else { g }).collect();
        let c = confusion(&gt, &pred).unwrap();
        let swap = |v: &[u8]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
        let cs = confusion(&swap(&gt), &swap(&pred)).unwrap();
        let cf = confusion(&gt, &swap(&pred)).unwrap();
        prop_assert!((mcc(&c) - mcc(&cs)).abs() < 1e-12);
        prop_assert!((mcc(&c) + mcc(&cf)).abs() < 1e-12);
        let (p, r) = (pre(&c), recall(&c));
        if c.tp + c.fp > 0 && c.tp + c.fn_ > 0 && p + r > 0.0 {
            prop_assert!((f1(&c) - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_is_rank_invariant(scores in proptest::collection::vec(-5.0f64..5.0, 2..60), labels in proptest::collection::vec(0u8..2, 60)) {
        let n = scores.len();
        let mut gt = labels[..n].to_vec();
        gt[0] = 0;
        gt[1] = 1;
        let moved: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() * 3.0 + 1.0).collect();
        prop_assert!((auc(&gt, &scores).unwrap() - auc(&gt, &moved).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_the_size_weighted_stability_mean(gt in proptest::collection::vec(0u8..2, 1..80), pred in proptest::collection::vec(0u8..2, 80), groups in 1usize..10) {
        let n = gt.len();
        let groups = groups.min(n);
        let ts: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = stability(&gt, &pred[..n], &ts, groups).unwrap();
        let weighted: f64 = s.series.iter().zip(&s.group_sizes).map(|(a, &g)| a * g as f64).sum::<f64>() / n as f64;
        prop_assert!((weighted - acc(&confusion(&gt, &pred[..n]).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn angular_distance_is_a_pseudometric(a in proptest::collection::vec(0.0f64..1.0, 6), b in proptest::collection::vec(0.0f64..1.0, 6), c in proptest::collection::vec(0.0f64..1.0, 6)) {
        let ab = angular_distance_deg(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, angular_distance_deg(&b, &a));
        prop_assert_eq!(angular_distance_deg(&a, &a), 0.0);
        prop_assert!(ab <= angular_distance_deg(&a, &c) + angular_distance_deg(&c, &b) + 1e-9);
    }

    #[test]
    fn matrix_comparison_is_symmetric(x in proptest::collection::vec(0usize..3, 3..200), y in proptest::collection::vec(0usize..3, 3..200), order in 1usize..3) {
        let alphabet = ["p", "q", "r"];
        let a = fit_markov(&x, &alphabet, order).unwrap();
        let b = fit_markov(&y, &alphabet, order).unwrap();
        for m in [&a, &b] {
            for row in &m.probs {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(compare_matrices(&a, &b, 0.1).unwrap(), compare_matrices(&b, &a, 0.1).unwrap());
    }

    #[test]
    fn dbscan_is_deterministic(points in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..30), eps in 1.0f64..30.0) {
        let dist: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| angular_distance_deg(a, b)).collect()).collect();
        prop_assert_eq!(dbscan(&dist, eps, 3), dbscan(&dist, eps, 3));
    }
}

#[test]
fn objective_decreases_on_average() {
    let mut r = common::rng(31);
    let d = common::blobs(&mut r, 200, 4, 1.5);
    let base = SvmConfig { epochs_per_call: 3, ..SvmConfig::default() };
    let mut before = 0.0;
    let mut after = 0.0;
    for seed in 0..20 {
        let init = fedmsa_core::fedsvm::initial_model(seed, 4);
        let cfg = SvmConfig { seed, ..base.clone() };
        before += svm_objective(&init, &d, &cfg).unwrap();
        after += svm_objective(&svm_train(&init, &d, &cfg).unwrap(), &d, &cfg).unwrap();
    }
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn class_weight_symmetry() {
    let mut r = common::rng(32);
    let d = common::blobs(&mut r, 150, 3, 1.0);
    let flipped = Dataset::new(
        d.ids().to_vec(),
        d.timestamps().to_vec(),
        d.features().to_vec(),
        d.labels().iter().map(|l| 1 - l).collect(),
        d.feature_names().to_vec(),
    )
    .unwrap();
    let cfg = SvmConfig { class_weights: [1.0, 2.5], ..SvmConfig::default() };
    let swapped = SvmConfig { class_weights: [2.5, 1.0], ..cfg.clone() };
    let init = LinearModel::zeros(3);
    let m = svm_train(&init, &d, &cfg).unwrap();
    let mf = svm_train(&init.negated(), &flipped, &swapped).unwrap();
    assert!(m.max_abs_diff(&mf.negated()) < 1e-9);
    let a = svm_predict_dataset(&m, &d).unwrap();
    let b = svm_predict_dataset(&mf, &d).unwrap();
    // scores are exact negations; a score of exactly 0 would break the flip
    assert!(a.iter().zip(&b).all(|(x, y)| *x == 1 - *y));
}

#[test]
fn markov_fit_recovers_a_known_chain() {
    let truth = [[0.7, 0.2, 0.1], [0.3, 0.5, 0.2], [0.25, 0.25, 0.5]];
    let mut r = common::rng(33);
    let mut s = 0usize;
    let mut seq = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        seq.push(s);
        let u: f64 = r.random();
        s = if u < truth[s][0] { 0 } else if u < truth[s][0] + truth[s][1] { 1 } else { 2 };
    }
    let m = fit_markov(&seq, &["a", "b", "c"], 1).unwrap();
    for (got, want) in m.probs.iter().zip(&truth) {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 0.02);
        }
    }
}

#[test]
fn synthetic_generation_is_byte_deterministic() {
    let spec = SyntheticSpec { n_samples: 300, n_features: 6, positive_fraction: 1.0 / 3.0, sparsity: 0.1, class_separation: 1.0, seed: 5 };
    assert_eq!(csv_text(&generate_synthetic(&spec).unwrap()), csv_text(&generate_synthetic(&spec).unwrap()));
}
