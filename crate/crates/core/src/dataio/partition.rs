use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Clients with identical feature spaces and disjoint samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizontalPartition {
    pub clients: Vec<Dataset>,
}

impl HorizontalPartition {
    pub fn k(&self) -> usize {
        self.clients.len()
    }
}

/// Clients with identical samples (same order) and disjoint feature columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerticalPartition {
    pub clients: Vec<Dataset>,
}

impl VerticalPartition {
    pub fn k(&self) -> usize {
        self.clients.len()
    }

    /// Checks the shared-ids and disjoint-features invariants.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .clients
            .first()
            .ok_or_else(|| Error::Partition("vertical partition has no clients".into()))?;
        let mut names = HashSet::new();
        for c in &self.clients {
            if c.ids() != first.ids() || c.labels() != first.labels() {
                return Err(Error::Partition("clients disagree on sample ids or labels".into()));
            }
            for name in c.feature_names() {
                if !names.insert(name.clone()) {
                    return Err(Error::Partition(format!("feature `{name}` held by two clients")));
                }
            }
        }
        Ok(())
    }

    /// Column-wise re-concatenation in client order.
    pub fn merge(&self) -> Result<Dataset> {
        self.validate()?;
        let first = &self.clients[0];
        let n = first.n_samples();
        let mut names = Vec::new();
        for c in &self.clients {
            names.extend(c.feature_names().iter().cloned());
        }
        let mut features = Vec::with_capacity(n * names.len());
        for i in 0..n {
            for c in &self.clients {
                features.extend_from_slice(c.row(i));
            }
        }
        Dataset::new(first.ids().to_vec(), first.timestamps().to_vec(), features, first.labels().to_vec(), names)
    }
}

/// Deals samples to `k` clients. With `stratified`, each class is shuffled
/// and dealt round-robin so per-class and total client sizes differ by at
/// most one; otherwise all samples are shuffled and dealt together. Rows
/// keep their parent order inside each client.
pub fn partition_horizontal(d: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<HorizontalPartition> {
    let n = d.n_samples();
    if k == 0 {
        return Err(Error::Partition("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Partition(format!("k={k} exceeds n={n}")));
    }
    let mut rng = seed::rng(seed);
    let order: Vec<usize> = if stratified {
        let mut neg: Vec<usize> = (0..n).filter(|&i| d.labels()[i] == 0).collect();
        let mut pos: Vec<usize> = (0..n).filter(|&i| d.labels()[i] == 1).collect();
        neg.shuffle(&mut rng);
        pos.shuffle(&mut rng);
        neg.into_iter().chain(pos).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut buckets = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, row) in order.into_iter().enumerate() {
        buckets[pos % k].push(row);
    }
    let clients = buckets
        .into_iter()
        .map(|mut rows| {
            rows.sort_unstable();
            d.subset_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HorizontalPartition { clients })
}

pub fn partition_vertical(d: &Dataset, feature_groups: &[Vec<String>]) -> Result<VerticalPartition> {
    if feature_groups.is_empty() {
        return Err(Error::Partition("no feature groups".into()));
    }
    let mut used = HashSet::new();
    let mut clients = Vec::with_capacity(feature_groups.len());
    for group in feature_groups {
        let mut cols = Vec::with_capacity(group.len());
        for name in group {
            let col = d.feature_index(name).ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            if !used.insert(col) {
                return Err(Error::Partition(format!("feature `{name}` appears in more than one group")));
            }
            cols.push(col);
        }
        clients.push(d.select_columns(&cols)?);
    }
    Ok(VerticalPartition { clients })
}

/// Splits the feature list into `k` contiguous groups whose sizes differ by
/// at most one (earlier groups take the remainder).
pub fn split_feature_groups(names: &[String], k: usize) -> Result<Vec<Vec<String>>> {
    if k == 0 || k > names.len() {
        return Err(Error::Partition(format!("cannot split {} features into {k} groups", names.len())));
    }
    let base = names.len() / k;
    let extra = names.len() % k;
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let len = base + usize::from(g < extra);
        groups.push(names[start..start + len].to_vec());
        start += len;
    }
    Ok(groups)
}

/// Stratified, seeded train/test split. Both halves keep parent row order.
pub fn stratified_split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction {train_fraction} outside (0,1)")));
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..d.n_samples()).filter(|&i| d.labels()[i] == class).collect();
        rows.shuffle(&mut rng);
        let n_train = (train_fraction * rows.len() as f64).round() as usize;
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("train/test split leaves one side empty".into()));
    }
    Ok((d.subset_rows(&train)?, d.subset_rows(&test)?))
}
