mod common;

use std::path::PathBuf;

use common::rng;
use fedmsa_core::markov::{
    compare_matrices, heterogeneity_from_labels, heterogeneity_from_sequences, read_matrix_csv, sample_groups, write_matrix_csv,
    ClusterLabel, GroupDescriptor, HeterogeneityConfig,
};
use rand::Rng;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bernoulli_groups(r: &mut rand_chacha::ChaCha8Rng, p: f64, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let len = r.random_range(300..=1000);
            (0..len).map(|_| usize::from(r.random_bool(p))).collect()
        })
        .collect()
}

fn descriptors(seqs: &[Vec<usize>]) -> Vec<GroupDescriptor> {
    let mut start = 0;
    seqs.iter()
        .map(|s| {
            let g = GroupDescriptor { start, len: s.len() };
            start += s.len();
            g
        })
        .collect()
}

#[test]
fn planted_regimes_separate_into_two_clusters() {
    let mut r = rng(41);
    let mut seqs = bernoulli_groups(&mut r, 0.05, 50);
    seqs.extend(bernoulli_groups(&mut r, 0.6, 50));
    let rep = heterogeneity_from_sequences(&seqs, descriptors(&seqs), 1, 5.0, 3).unwrap();
    assert_eq!(rep.n_clusters, 2, "{:?}", rep.cluster_sizes);
    assert!(rep.n_outliers <= 5, "{} outliers", rep.n_outliers);
    // no cluster mixes the regimes
    for c in 0..2 {
        let members: Vec<usize> = (0..100).filter(|&g| rep.assignments[g] == ClusterLabel::Cluster(c)).collect();
        assert!(members.iter().all(|&g| g < 50) || members.iter().all(|&g| g >= 50));
    }
    assert!(rep.silhouette.unwrap() > 0.5);
}

#[test]
fn single_regime_is_one_cluster() {
    let mut r = rng(42);
    let seqs = bernoulli_groups(&mut r, 0.3, 60);
    let rep = heterogeneity_from_sequences(&seqs, descriptors(&seqs), 1, 5.0, 3).unwrap();
    assert_eq!(rep.n_clusters, 1);
    assert!(!rep.is_heterogeneous());
}

#[test]
fn engineered_fixture_reproduces_the_92_6_shape() {
    let text = std::fs::read_to_string(fixture("heterogeneity_92_6.txt")).unwrap();
    let seqs: Vec<Vec<usize>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().bytes().map(|b| usize::from(b - b'0')).collect())
        .collect();
    assert_eq!(seqs.len(), 100);
    let rep = heterogeneity_from_sequences(&seqs, descriptors(&seqs), 1, 5.0, 3).unwrap();
    let mut sizes = rep.cluster_sizes.clone();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(sizes, vec![92, 6]);
    assert_eq!(rep.n_outliers, 2);
}

#[test]
fn label_windows_of_a_two_phase_process_are_heterogeneous() {
    let mut r = rng(43);
    let labels: Vec<usize> = (0..20_000).map(|i| usize::from(r.random_bool(if i < 10_000 { 0.05 } else { 0.6 }))).collect();
    let reports = heterogeneity_from_labels(&labels, &HeterogeneityConfig { seed: 4, ..Default::default() }).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.n_clusters >= 2), "{:?}", reports.iter().map(|r| r.n_clusters).collect::<Vec<_>>());
}

#[test]
fn group_lengths_are_uniform() {
    // χ² goodness of fit over 8 equal-width length bins, 4000 draws
    let groups = sample_groups(5000, 4000, (300, 1099), 9).unwrap();
    let mut bins = [0usize; 8];
    for g in &groups {
        assert!(g.end <= 5000);
        bins[(g.len() - 300) / 100] += 1;
    }
    let expected = 500.0;
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of χ² with 7 degrees of freedom
    assert!(chi2 < 24.32, "χ² = {chi2}, bins {bins:?}");
}

fn load(name: &str) -> fedmsa_core::TransitionMatrix {
    read_matrix_csv(std::fs::File::open(fixture(name)).unwrap()).unwrap()
}

#[test]
fn published_svm_error_matrices() {
    let cmp = compare_matrices(&load("svm_error_markov_fl.csv"), &load("svm_error_markov_cl.csv"), 0.1).unwrap();
    assert!((cmp.max_diff - 0.096).abs() <= 0.001, "{}", cmp.max_diff);
    assert!((cmp.mean_diff - 0.054).abs() <= 0.001, "{}", cmp.mean_diff);
    assert!(cmp.within);
}

#[test]
fn published_rf_error_matrices() {
    let cmp = compare_matrices(&load("rf_error_markov_fl.csv"), &load("rf_error_markov_cl.csv"), 0.1).unwrap();
    assert!((cmp.max_diff - 0.100).abs() <= 0.001, "{}", cmp.max_diff);
    assert!((cmp.mean_diff - 0.035).abs() <= 0.001, "{}", cmp.mean_diff);
}

#[test]
fn matrix_csv_round_trip() {
    let m = load("svm_error_markov_fl.csv");
    let mut out = Vec::new();
    write_matrix_csv(&m, &mut out).unwrap();
    assert_eq!(read_matrix_csv(out.as_slice()).unwrap(), m);
}
