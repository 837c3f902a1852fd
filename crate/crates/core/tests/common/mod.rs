#![allow(dead_code)]

pub mod oracles;
pub mod privacy;

use fedmsa_core::seed;
use fedmsa_core::Dataset;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(s: u64) -> ChaCha8Rng {
    seed::rng(s)
}

/// Grid value `0.37·k + 0.011`; never an integer, and neither is any midpoint
/// of two grid values, so transcripts can be scanned for them.
pub fn grid(k: u32) -> f64 {
    0.37 * k as f64 + 0.011
}

/// Random dataset with `levels` distinct values per feature and labels
/// loosely tied to the first two features.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, p: usize, levels: u32) -> Dataset {
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<u32> = (0..p).map(|_| r.random_range(0..levels)).collect();
        let signal = row[0] as f64 + row.get(1).copied().unwrap_or(0) as f64 * 0.5;
        let noise: f64 = r.random_range(0.0..levels as f64);
        labels.push(u8::from(signal + noise > levels as f64 * 1.2));
        features.extend(row.into_iter().map(grid));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        labels[0] = 1 - labels[0];
    }
    Dataset::new(
        (0..n as u64).map(|i| 1000 + 7 * i).collect(),
        (0..n).map(|i| i as f64).collect(),
        features,
        labels,
        (0..p).map(|j| format!("x{j}")).collect(),
    )
    .unwrap()
}

/// Continuous Gaussian-ish two-class data for SVM tests.
pub fn blobs(r: &mut ChaCha8Rng, n: usize, p: usize, shift: f64) -> Dataset {
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = u8::from(i % 3 == 0);
        labels.push(y);
        for j in 0..p {
            let z: f64 = (0..4).map(|_| r.random_range(-1.0..1.0)).sum::<f64>() * 0.6;
            let mu = if y == 1 && j < 3 { shift } else { 0.0 };
            features.push(mu + z);
        }
    }
    Dataset::new(
        (0..n as u64).collect(),
        (0..n).map(|i| i as f64).collect(),
        features,
        labels,
        (0..p).map(|j| format!("f{j:02}")).collect(),
    )
    .unwrap()
}

/// Random assignment of feature names to `k` non-empty groups, each group in
/// ascending column order.
pub fn random_groups(r: &mut ChaCha8Rng, names: &[String], k: usize) -> Vec<Vec<String>> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.shuffle(r);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in order.iter().enumerate() {
        let g = if i < k { i } else { r.random_range(0..k) };
        groups[g].push(c);
    }
    groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g.into_iter().map(|c| names[c].clone()).collect()
        })
        .collect()
}
