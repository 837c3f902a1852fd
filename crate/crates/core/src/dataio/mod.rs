//! Dataset representation, CSV ingestion, synthetic production-line data, HFL/VFL
//! partitioning, imputation and PCA.

mod csvio;
mod impute;
mod partition;
mod pca;
mod synthetic;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

pub use csvio::{load_csv, read_csv, write_csv, CsvSchema};
pub use impute::{impute_missing, ImputeStrategy, ImputeWarning};
pub use partition::{
    partition_horizontal, partition_vertical, split_feature_groups, stratified_split,
    HorizontalPartition, VerticalPartition,
};
pub use pca::{fit_pca, PcaModel, PcaOptions, PcaTarget};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Sentinel for a missing cell. Valid readings are always finite.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Row-major sample table.
///
/// Invariants checked at construction: equal lengths, unique ids, finite
/// non-decreasing timestamps, binary labels, finite-or-missing cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    ids: Vec<u64>,
    timestamps: Vec<f64>,
    features: Vec<f64>,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        ids: Vec<u64>,
        timestamps: Vec<f64>,
        features: Vec<f64>,
        labels: Vec<Label>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = ids.len();
        let p = feature_names.len();
        if timestamps.len() != n || labels.len() != n {
            return Err(Error::Integrity(format!(
                "column lengths differ: ids={n}, timestamps={}, labels={}",
                timestamps.len(),
                labels.len()
            )));
        }
        if features.len() != n * p {
            return Err(Error::Integrity(format!(
                "feature matrix has {} cells, expected {n}x{p}",
                features.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        let mut names = HashSet::with_capacity(p);
        for name in &feature_names {
            if !names.insert(name.as_str()) {
                return Err(Error::Integrity(format!("duplicate feature name `{name}`")));
            }
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Integrity(format!(
                    "timestamps decrease at row {} ({} after {}); sort input by time",
                    i + 1,
                    w[1],
                    w[0]
                )));
            }
        }
        if let Some(t) = timestamps.iter().find(|t| !t.is_finite()) {
            return Err(Error::Integrity(format!("non-finite timestamp {t}")));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Integrity(format!("label {l} is not binary")));
        }
        if features.iter().any(|v| v.is_infinite()) {
            return Err(Error::Integrity("infinite feature value".into()));
        }
        Ok(Self { ids, timestamps, features, labels, feature_names })
    }

    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Raw row-major feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_features() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.value(i, col)).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn has_missing(&self) -> bool {
        self.features.iter().any(|v| is_missing(*v))
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    /// Stable permutation that orders rows by timestamp.
    pub fn time_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_samples()).collect();
        order.sort_by(|&a, &b| self.timestamps[a].total_cmp(&self.timestamps[b]));
        order
    }

    /// New dataset holding the given rows, in the order given.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let p = self.n_features();
        let mut features = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset::new(
            rows.iter().map(|&r| self.ids[r]).collect(),
            rows.iter().map(|&r| self.timestamps[r]).collect(),
            features,
            rows.iter().map(|&r| self.labels[r]).collect(),
            self.feature_names.clone(),
        )
    }

    /// New dataset holding the given columns, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        let n = self.n_samples();
        let mut features = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            features.extend(cols.iter().map(|&c| self.value(i, c)));
        }
        Dataset::new(
            self.ids.clone(),
            self.timestamps.clone(),
            features,
            self.labels.clone(),
            cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
        )
    }

    /// Cell-wise equality treating missing == missing.
    pub fn same_content(&self, other: &Dataset) -> bool {
        self.ids == other.ids
            && self.labels == other.labels
            && self.feature_names == other.feature_names
            && self.timestamps.len() == other.timestamps.len()
            && self.timestamps.iter().zip(&other.timestamps).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| (is_missing(*a) && is_missing(*b)) || a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("F{j}")).collect()
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::new(vec![1, 1], vec![0.0, 1.0], vec![0.0, 0.0], vec![0, 1], names(1))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(1)));
    }

    #[test]
    fn rejects_length_mismatch_and_bad_labels() {
        assert!(Dataset::new(vec![1], vec![0.0, 1.0], vec![0.0], vec![0], names(1)).is_err());
        assert!(Dataset::new(vec![1], vec![0.0], vec![0.0], vec![2], names(1)).is_err());
        assert!(Dataset::new(vec![1, 2], vec![1.0, 0.0], vec![0.0, 0.0], vec![0, 1], names(1)).is_err());
    }

    #[test]
    fn subset_and_select() {
        let d = Dataset::new(
            vec![10, 11, 12],
            vec![0.0, 1.0, 2.0],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, MISSING],
            vec![0, 1, 0],
            names(2),
        )
        .unwrap();
        assert!(d.has_missing());
        let s = d.subset_rows(&[0, 2]).unwrap();
        assert_eq!(s.ids(), &[10, 12]);
        assert_eq!(s.row(0), &[1.0, 2.0]);
        let c = d.select_columns(&[1]).unwrap();
        assert_eq!(c.feature_names(), &["F2".to_string()]);
        assert_eq!(c.value(1, 0), 4.0);
        assert_eq!(d.class_counts(), [2, 1]);
        assert!(d.same_content(&d.clone()));
    }
}
