//! Linear soft-margin SVM trained by seeded stochastic sub-gradient descent.
//!
//! Objective, with targets `y ∈ {-1, +1}` and per-class weights `c_y`:
//!
//! ```text
//! J(w, b) = λ/2 ‖w‖² + (C / n) Σ c_y · max(0, 1 − y (w·x + b))
//! ```
//!
//! One call to [`svm_train`] runs `epochs_per_call` passes over the data in a
//! per-epoch shuffled order, stepping with `η_t = η₀ / (1 + t · decay)`,
//! where `t` counts updates within the call.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::{seed, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim], intercept: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Largest absolute elementwise difference, intercept included.
    pub fn max_abs_diff(&self, other: &LinearModel) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold((self.intercept - other.intercept).abs(), f64::max)
    }

    pub fn negated(&self) -> LinearModel {
        LinearModel { weights: self.weights.iter().map(|w| -w).collect(), intercept: -self.intercept }
    }
}

/// Serialized form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelRecord {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub feature_names: Vec<String>,
}

impl LinearModelRecord {
    pub fn new(model: &LinearModel, feature_names: &[String]) -> Result<Self> {
        if model.dim() != feature_names.len() {
            return Err(Error::Contract(format!(
                "model has {} weights but {} feature names",
                model.dim(),
                feature_names.len()
            )));
        }
        Ok(Self { weights: model.weights.clone(), intercept: model.intercept, feature_names: feature_names.to_vec() })
    }

    pub fn model(&self) -> LinearModel {
        LinearModel { weights: self.weights.clone(), intercept: self.intercept }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge-loss weight C.
    pub c: f64,
    /// L2 regularization strength λ.
    pub lambda: f64,
    pub eta0: f64,
    pub decay: f64,
    pub epochs_per_call: usize,
    pub seed: u64,
    /// Weights for class 0 and class 1.
    pub class_weights: [f64; 2],
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, lambda: 1e-3, eta0: 0.05, decay: 1e-3, epochs_per_call: 5, seed: 0, class_weights: [1.0, 1.0] }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.c) {
            return Err(Error::Config(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !positive(self.eta0) {
            return Err(Error::Config(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::Config(format!("decay must be >= 0, got {}", self.decay)));
        }
        if self.epochs_per_call == 0 {
            return Err(Error::Config("epochs_per_call must be >= 1".into()));
        }
        if !self.class_weights.iter().all(|&w| positive(w)) {
            return Err(Error::Config("class weights must be > 0".into()));
        }
        Ok(())
    }
}

#[inline]
fn target(label: Label) -> f64 {
    if label == 1 { 1.0 } else { -1.0 }
}

fn check_dim(m: &LinearModel, p: usize) -> Result<()> {
    if m.dim() != p {
        return Err(Error::Contract(format!("model dimension {} does not match {p} features", m.dim())));
    }
    Ok(())
}

pub fn svm_score(m: &LinearModel, x: &[f64]) -> Result<f64> {
    check_dim(m, x.len())?;
    Ok(dot(&m.weights, x) + m.intercept)
}

/// 1 iff the score is strictly positive.
pub fn svm_predict(m: &LinearModel, x: &[f64]) -> Result<Label> {
    Ok(u8::from(svm_score(m, x)? > 0.0))
}

pub fn svm_scores(m: &LinearModel, d: &Dataset) -> Result<Vec<f64>> {
    check_dim(m, d.n_features())?;
    Ok((0..d.n_samples()).map(|i| dot(&m.weights, d.row(i)) + m.intercept).collect())
}

pub fn svm_predict_dataset(m: &LinearModel, d: &Dataset) -> Result<Vec<Label>> {
    Ok(svm_scores(m, d)?.into_iter().map(|s| u8::from(s > 0.0)).collect())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Value of the regularized hinge objective.
pub fn svm_objective(m: &LinearModel, d: &Dataset, cfg: &SvmConfig) -> Result<f64> {
    check_dim(m, d.n_features())?;
    let n = d.n_samples();
    let hinge: f64 = (0..n)
        .map(|i| {
            let y = target(d.labels()[i]);
            let margin = y * (dot(&m.weights, d.row(i)) + m.intercept);
            cfg.class_weights[d.labels()[i] as usize] * (1.0 - margin).max(0.0)
        })
        .sum();
    Ok(0.5 * cfg.lambda * dot(&m.weights, &m.weights) + cfg.c * hinge / n as f64)
}

pub fn svm_train(init: &LinearModel, data: &Dataset, cfg: &SvmConfig) -> Result<LinearModel> {
    cfg.validate()?;
    check_dim(init, data.n_features())?;
    if data.has_missing() {
        return Err(Error::Precondition("SVM training data has missing values".into()));
    }
    let [neg, pos] = data.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Training(format!("training data must contain both classes (neg={neg}, pos={pos})")));
    }

    let mut w = init.weights.clone();
    let mut b = init.intercept;
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.n_samples()).collect();
    let mut step: u64 = 0;

    for _ in 0..cfg.epochs_per_call {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.eta0 / (1.0 + step as f64 * cfg.decay);
            let x = data.row(i);
            let label = data.labels()[i];
            let y = target(label);
            let margin = y * (dot(&w, x) + b);
            let shrink = 1.0 - eta * cfg.lambda;
            if margin < 1.0 {
                let g = eta * cfg.c * cfg.class_weights[label as usize] * y;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj = shrink * *wj + g * xj;
                }
                b += g;
            } else {
                for wj in w.iter_mut() {
                    *wj *= shrink;
                }
            }
            step += 1;
        }
    }

    let model = LinearModel { weights: w, intercept: b };
    if !model.is_finite() {
        return Err(Error::Training("training diverged to non-finite parameters; lower eta0".into()));
    }
    Ok(model)
}
