use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PcaTarget {
    /// Keep exactly this many components.
    Components(usize),
    /// Keep the fewest components whose cumulative variance ratio reaches this value.
    VarianceRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    pub target: PcaTarget,
    /// Divide centered columns by their sample standard deviation first.
    pub standardize: bool,
}

impl PcaOptions {
    pub fn new(target: PcaTarget) -> Self {
        Self { target, standardize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Option<Vec<f64>>,
    /// q rows of length p, orthonormal, ordered by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Principal components of the sample covariance (n - 1 denominator).
pub fn fit_pca(d: &Dataset, options: PcaOptions) -> Result<PcaModel> {
    if d.has_missing() {
        return Err(Error::Precondition("PCA input has missing values; impute first".into()));
    }
    let n = d.n_samples();
    let p = d.n_features();
    if n < 2 || p == 0 {
        return Err(Error::Precondition(format!("PCA needs n >= 2 and p >= 1, got n={n}, p={p}")));
    }

    let x = DMatrix::from_row_slice(n, p, d.features());
    let mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut centered = x;
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let scale = if options.standardize {
        let sd: Vec<f64> = centered
            .column_iter()
            .map(|c| {
                let s = (c.norm_squared() / (n - 1) as f64).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col /= sd[j];
        }
        Some(sd)
    } else {
        None
    };

    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Precondition("data has zero total variance".into()));
    }
    let ratios: Vec<f64> = values.iter().map(|v| v / total).collect();

    let q = match options.target {
        PcaTarget::Components(q) => {
            if q == 0 || q > p {
                return Err(Error::Precondition(format!("component count {q} outside 1..={p}")));
            }
            q
        }
        PcaTarget::VarianceRatio(v) => {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Precondition(format!("variance threshold {v} outside (0,1]")));
            }
            let mut acc = 0.0;
            let mut q = p;
            for (i, r) in ratios.iter().enumerate() {
                acc += r;
                if acc >= v - 1e-12 {
                    q = i + 1;
                    break;
                }
            }
            q
        }
    };

    let components = order[..q]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // sign convention: largest-magnitude entry positive
            let pivot = v.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();

    Ok(PcaModel {
        feature_names: d.feature_names().to_vec(),
        mean,
        scale,
        components,
        explained_variance: values[..q].to_vec(),
        explained_variance_ratio: ratios[..q].to_vec(),
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    fn normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let c = v - self.mean[j];
                match &self.scale {
                    Some(s) => c / s[j],
                    None => c,
                }
            })
            .collect()
    }

    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        let z = self.normalized(x);
        self.components.iter().map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn reconstruct_row(&self, scores: &[f64]) -> Vec<f64> {
        let p = self.mean.len();
        let mut out = vec![0.0; p];
        for (c, s) in self.components.iter().zip(scores) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            if let Some(s) = &self.scale {
                *o *= s[j];
            }
            *o += self.mean[j];
        }
        out
    }

    /// Projects a dataset onto the components; new columns are named PC1..PCq.
    pub fn transform(&self, d: &Dataset) -> Result<Dataset> {
        if d.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Contract("dataset features differ from the PCA fit".into()));
        }
        if d.has_missing() {
            return Err(Error::Precondition("PCA input has missing values; impute first".into()));
        }
        let mut features = Vec::with_capacity(d.n_samples() * self.n_components());
        for i in 0..d.n_samples() {
            features.extend(self.project_row(d.row(i)));
        }
        Dataset::new(
            d.ids().to_vec(),
            d.timestamps().to_vec(),
            features,
            d.labels().to_vec(),
            (1..=self.n_components()).map(|j| format!("PC{j}")).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::MISSING;

    fn dataset(n: usize, p: usize, values: Vec<f64>) -> Dataset {
        Dataset::new(
            (0..n as u64).collect(),
            (0..n).map(|i| i as f64).collect(),
            values,
            vec![0; n],
            (1..=p).map(|j| format!("F{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rank_one_line() {
        let values: Vec<f64> = (0..10).flat_map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let m = fit_pca(&dataset(10, 2, values), PcaOptions::new(PcaTarget::Components(1))).unwrap();
        assert_eq!(m.explained_variance_ratio.len(), 1);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let c = &m.components[0];
        assert!((c[1] / c[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn missing_values_rejected() {
        let d = dataset(2, 1, vec![1.0, MISSING]);
        assert!(matches!(fit_pca(&d, PcaOptions::new(PcaTarget::Components(1))), Err(Error::Precondition(_))));
    }

    #[test]
    fn standardized_round_trip() {
        let values = vec![1.0, 10.0, 2.0, 30.0, 4.0, 20.0, 3.0, 50.0];
        let d = dataset(4, 2, values);
        let opts = PcaOptions { target: PcaTarget::Components(2), standardize: true };
        let m = fit_pca(&d, opts).unwrap();
        for i in 0..4 {
            let back = m.reconstruct_row(&m.project_row(d.row(i)));
            for (a, b) in back.iter().zip(d.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let t = m.transform(&d).unwrap();
        assert_eq!(t.feature_names(), &["PC1".to_string(), "PC2".to_string()]);
    }
}
