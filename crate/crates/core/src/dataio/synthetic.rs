use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, MISSING};
use crate::error::{Error, Result};
use crate::seed;

/// Parameters of the production-line generator: imbalanced, sparse, timestamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub positive_fraction: f64,
    /// Fraction of cells replaced by the missing marker.
    pub sparsity: f64,
    /// Mean shift of the faulty class along the signal direction.
    pub class_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Number of faulty samples: `positive_fraction * n_samples` rounded half away from zero.
    pub fn n_positive(&self) -> usize {
        (self.positive_fraction * self.n_samples as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::Spec("n_samples must be at least 2".into()));
        }
        if self.n_features == 0 {
            return Err(Error::Spec("n_features must be at least 1".into()));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::Spec(format!("positive_fraction {} outside (0,1)", self.positive_fraction)));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Spec(format!("sparsity {} outside [0,1]", self.sparsity)));
        }
        if !self.class_separation.is_finite() || self.class_separation < 0.0 {
            return Err(Error::Spec("class_separation must be finite and >= 0".into()));
        }
        let pos = self.n_positive();
        if pos < 1 || pos >= self.n_samples {
            return Err(Error::Spec(format!(
                "{} x {} gives {pos} positives; both classes need at least one sample",
                self.positive_fraction, self.n_samples
            )));
        }
        Ok(())
    }

    /// Per-feature mean shift of the faulty class. Feature 0 carries the full
    /// separation; later features carry alternating, decaying shifts.
    pub fn shift(&self, feature: usize) -> f64 {
        let sign = if feature.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * self.class_separation / ((feature + 1) as f64).sqrt()
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_samples;
    let p = spec.n_features;
    let mut rng = seed::rng(spec.seed);

    let mut labels = vec![0u8; n];
    for i in index::sample(&mut rng, n, spec.n_positive()) {
        labels[i] = 1;
    }
    let shifts: Vec<f64> = (0..p).map(|j| spec.shift(j)).collect();

    let mut features = Vec::with_capacity(n * p);
    for &label in &labels {
        for &shift in &shifts {
            let z: f64 = rng.sample(StandardNormal);
            let drop = rng.random::<f64>() < spec.sparsity;
            features.push(if drop { MISSING } else { z + f64::from(label) * shift });
        }
    }

    Dataset::new(
        (0..n as u64).collect(),
        (0..n).map(|i| i as f64).collect(),
        features,
        labels,
        (1..=p).map(|j| format!("F{j}")).collect(),
    )
}
