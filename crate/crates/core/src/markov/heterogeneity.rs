use serde::{Deserialize, Serialize};

use super::dbscan::{angular_distance_deg, dbscan, silhouette, ClusterLabel};
use super::{fit_markov, sample_groups, LABEL_ALPHABET};
use crate::dataio::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityConfig {
    pub n_groups: usize,
    pub len_range: (usize, usize),
    /// Markov orders to analyse, each paired with its DBSCAN radius in degrees.
    pub orders: Vec<(usize, f64)>,
    pub min_pts: usize,
    pub seed: u64,
}

impl Default for HeterogeneityConfig {
    fn default() -> Self {
        Self { n_groups: 100, len_range: (300, 1000), orders: vec![(1, 5.0), (2, 8.0)], min_pts: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub order: usize,
    pub eps_degrees: f64,
    pub min_pts: usize,
    pub groups: Vec<GroupDescriptor>,
    pub vectors: Vec<Vec<f64>>,
    pub assignments: Vec<ClusterLabel>,
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub n_outliers: usize,
    /// Mean silhouette under the angular distance; absent with < 2 clusters.
    pub silhouette: Option<f64>,
    /// Groups whose fitted matrix has at least one unobserved (uniform) row.
    pub flagged_groups: Vec<usize>,
}

impl HeterogeneityReport {
    pub fn is_heterogeneous(&self) -> bool {
        self.n_clusters >= 2
    }
}

/// Ground-truth labels in time order as state indices (S0 = qualified).
pub fn label_sequence(d: &Dataset) -> Vec<usize> {
    d.time_order().into_iter().map(|i| d.labels()[i] as usize).collect()
}

/// Clusters order-`order` label-transition matrices fitted on each sequence.
pub fn heterogeneity_from_sequences(
    sequences: &[Vec<usize>],
    groups: Vec<GroupDescriptor>,
    order: usize,
    eps_degrees: f64,
    min_pts: usize,
) -> Result<HeterogeneityReport> {
    if sequences.len() != groups.len() {
        return Err(Error::Contract("one descriptor per sequence required".into()));
    }
    let mut vectors = Vec::with_capacity(sequences.len());
    let mut flagged_groups = Vec::new();
    for (g, seq) in sequences.iter().enumerate() {
        let m = fit_markov(seq, &LABEL_ALPHABET, order)?;
        if m.uniform_rows.iter().any(|&u| u) {
            flagged_groups.push(g);
        }
        vectors.push(m.flatten());
    }
    let dist: Vec<Vec<f64>> =
        vectors.iter().map(|a| vectors.iter().map(|b| angular_distance_deg(a, b)).collect()).collect();
    let assignments = dbscan(&dist, eps_degrees, min_pts);
    let n_clusters = assignments
        .iter()
        .filter_map(|l| match l {
            ClusterLabel::Cluster(c) => Some(c + 1),
            ClusterLabel::Outlier => None,
        })
        .max()
        .unwrap_or(0);
    let mut cluster_sizes = vec![0; n_clusters];
    for l in &assignments {
        if let ClusterLabel::Cluster(c) = l {
            cluster_sizes[*c] += 1;
        }
    }
    let n_outliers = assignments.iter().filter(|l| **l == ClusterLabel::Outlier).count();
    let silhouette = silhouette(&dist, &assignments);
    Ok(HeterogeneityReport {
        order,
        eps_degrees,
        min_pts,
        groups,
        vectors,
        assignments,
        n_clusters,
        cluster_sizes,
        n_outliers,
        silhouette,
        flagged_groups,
    })
}

/// Samples random time windows of `d`, fits a label Markov model per window
/// and order, and clusters the flattened matrices.
pub fn heterogeneity(d: &Dataset, cfg: &HeterogeneityConfig) -> Result<Vec<HeterogeneityReport>> {
    heterogeneity_from_labels(&label_sequence(d), cfg)
}

/// [`heterogeneity`] on a time-ordered label sequence (0 = S0, 1 = S1).
pub fn heterogeneity_from_labels(labels: &[usize], cfg: &HeterogeneityConfig) -> Result<Vec<HeterogeneityReport>> {
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Precondition("heterogeneity analysis needs both labels present".into()));
    }
    let ranges = sample_groups(labels.len(), cfg.n_groups, cfg.len_range, cfg.seed)?;
    let sequences: Vec<Vec<usize>> = ranges.iter().map(|r| labels[r.clone()].to_vec()).collect();
    let groups: Vec<GroupDescriptor> = ranges.iter().map(|r| GroupDescriptor { start: r.start, len: r.len() }).collect();
    cfg.orders
        .iter()
        .map(|&(order, eps)| heterogeneity_from_sequences(&sequences, groups.clone(), order, eps, cfg.min_pts))
        .collect()
}
