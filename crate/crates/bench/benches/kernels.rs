use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedmsa_bench::{dataset, feature_groups};
use fedmsa_core::cart::{best_split, ForestConfig, SplitOptions};
use fedmsa_core::dataio::{partition_horizontal, partition_vertical};
use fedmsa_core::fedrf::run_fedrf;
use fedmsa_core::fedsvm::{initial_model, run_fedsvm};
use fedmsa_core::svm::{svm_train, SvmConfig};
use fedmsa_core::FedSvmOptions;

fn split(c: &mut Criterion) {
    let mut g = c.benchmark_group("best_split");
    for n in [500, 2000] {
        let d = dataset(n, 20, 1);
        let rows: Vec<usize> = (0..n).collect();
        let features: Vec<usize> = (0..20).collect();
        for cap in [None, Some(32)] {
            let opts = SplitOptions { threshold_cap: cap, min_samples_leaf: 1 };
            let id = BenchmarkId::new(format!("cap={cap:?}"), n);
            g.bench_with_input(id, &d, |b, d| b.iter(|| best_split(d, &rows, &features, &opts).unwrap()));
        }
    }
    g.finish();
}

fn svm(c: &mut Criterion) {
    let d = dataset(4000, 20, 2);
    let cfg = SvmConfig::default();
    let init = initial_model(0, 20);
    c.bench_function("svm_train/4000x20", |b| b.iter(|| svm_train(&init, &d, &cfg).unwrap()));
}

fn fedsvm(c: &mut Criterion) {
    let d = dataset(4000, 20, 3);
    let cfg = SvmConfig::default();
    let opts = FedSvmOptions { rounds: 10, param_delta_tol: None, seed: 4 };
    let mut g = c.benchmark_group("run_fedsvm");
    for k in [1, 4, 16] {
        let part = partition_horizontal(&d, k, 5, true).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &part, |b, p| b.iter(|| run_fedsvm(p, &cfg, &opts).unwrap()));
    }
    g.finish();
}

fn fedrf(c: &mut Criterion) {
    let d = dataset(2000, 20, 6);
    let cfg = ForestConfig { n_trees: 5, ..ForestConfig::default() };
    let mut g = c.benchmark_group("run_fedrf");
    g.sample_size(10);
    for k in [1, 4] {
        let part = partition_vertical(&d, &feature_groups(&d, k)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &part, |b, p| b.iter(|| run_fedrf(p, &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, split, svm, fedsvm, fedrf);
criterion_main!(benches);
