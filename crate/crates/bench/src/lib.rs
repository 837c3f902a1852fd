//! Workloads shared by the benchmarks.

use fedmsa_core::dataio::generate_synthetic;
use fedmsa_core::{Dataset, SyntheticSpec};

/// Synthetic dataset with a 2:1 class ratio.
pub fn dataset(n_samples: usize, n_features: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        n_samples,
        n_features,
        positive_fraction: 1.0 / 3.0,
        sparsity: 0.0,
        class_separation: 1.5,
        seed,
    };
    generate_synthetic(&spec).expect("valid synthetic spec")
}

/// Contiguous, near-equal feature groups.
pub fn feature_groups(d: &Dataset, k: usize) -> Vec<Vec<String>> {
    let names = d.feature_names();
    let size = names.len().div_ceil(k);
    names.chunks(size).map(|c| c.to_vec()).collect()
}
