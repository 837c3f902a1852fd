use std::path::{Path, PathBuf};

use fedmsa_core::cart::{ForestConfig, TreeConfig};
use fedmsa_core::dataio::{ImputeStrategy, SyntheticSpec};
use fedmsa_core::markov::HeterogeneityConfig;
use fedmsa_core::metrics::Deltas;
use fedmsa_core::seed;
use fedmsa_core::svm::SvmConfig;
use fedmsa_core::FedSvmOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Horizontal split, FedSVM vs SVM.
    Hfl,
    /// Vertical split, FedRF vs RF.
    Vfl,
}

/// Flat experiment configuration. Every stochastic step has its own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,

    /// CSV input; when absent a synthetic dataset is generated.
    pub data_csv: Option<PathBuf>,
    pub n_samples: usize,
    pub n_features: usize,
    pub positive_fraction: f64,
    pub sparsity: f64,
    pub class_separation: f64,
    pub data_seed: u64,

    pub impute: ImputeStrategy,
    /// Number of principal components to keep; 0 disables PCA.
    pub pca_components: usize,
    pub pca_standardize: bool,

    pub train_fraction: f64,
    pub split_seed: u64,

    pub n_clients: usize,
    pub stratified: bool,
    pub partition_seed: u64,
    /// Explicit vertical feature groups; contiguous equal groups otherwise.
    pub feature_groups: Option<Vec<Vec<String>>>,

    pub svm_c: f64,
    pub svm_lambda: f64,
    pub svm_eta0: f64,
    pub svm_decay: f64,
    pub svm_epochs: usize,
    pub svm_seed: u64,
    pub svm_class_weights: [f64; 2],
    pub rounds: u64,
    pub param_delta_tol: Option<f64>,
    pub fl_seed: u64,

    pub n_trees: usize,
    pub feature_fraction: f64,
    pub sample_fraction: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate thresholds per feature; 0 evaluates every midpoint.
    pub threshold_cap: usize,
    pub forest_seed: u64,

    pub delta: f64,
    pub delta_mcc_auc: f64,
    pub delta_matrix: f64,
    pub alpha: f64,

    pub rq1: bool,
    pub rq2: bool,
    pub rq3: bool,
    pub rq4: bool,

    pub stability_groups: usize,

    pub rq2_groups: usize,
    pub rq2_len_min: usize,
    pub rq2_len_max: usize,
    pub rq2_seed: u64,
    /// Fraction of groups that must be within δ for each metric.
    pub rq2_min_within: f64,

    pub rq3_order: usize,
    pub rq3_fixture_fl: Option<PathBuf>,
    pub rq3_fixture_cl: Option<PathBuf>,

    pub rq4_groups: usize,
    pub rq4_len_min: usize,
    pub rq4_len_max: usize,
    pub rq4_eps_k1: f64,
    pub rq4_eps_k2: f64,
    pub rq4_min_pts: usize,
    pub rq4_seed: u64,

    pub out_dir: PathBuf,
    pub log_payloads: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let svm = SvmConfig::default();
        let forest = ForestConfig::default();
        Self {
            scenario: Scenario::Hfl,
            data_csv: None,
            n_samples: 6000,
            n_features: 20,
            positive_fraction: 1.0 / 3.0,
            sparsity: 0.0,
            class_separation: 1.5,
            data_seed: 1,
            impute: ImputeStrategy::ColumnMean,
            pca_components: 0,
            pca_standardize: false,
            train_fraction: 0.7,
            split_seed: 2,
            n_clients: 4,
            stratified: true,
            partition_seed: 3,
            feature_groups: None,
            svm_c: svm.c,
            svm_lambda: svm.lambda,
            svm_eta0: svm.eta0,
            svm_decay: svm.decay,
            svm_epochs: svm.epochs_per_call,
            svm_seed: 4,
            svm_class_weights: svm.class_weights,
            rounds: 20,
            param_delta_tol: None,
            fl_seed: 5,
            n_trees: forest.n_trees,
            feature_fraction: forest.feature_fraction,
            sample_fraction: forest.sample_fraction,
            max_depth: forest.tree.max_depth,
            min_samples_leaf: forest.tree.min_samples_leaf,
            threshold_cap: forest.tree.threshold_cap.unwrap_or(0),
            forest_seed: 6,
            delta: 0.1,
            delta_mcc_auc: 0.2,
            delta_matrix: 0.1,
            alpha: 0.05,
            rq1: true,
            rq2: true,
            rq3: true,
            rq4: true,
            stability_groups: 10,
            rq2_groups: 100,
            rq2_len_min: 300,
            rq2_len_max: 1000,
            rq2_seed: 7,
            rq2_min_within: 0.95,
            rq3_order: 1,
            rq3_fixture_fl: None,
            rq3_fixture_cl: None,
            rq4_groups: 100,
            rq4_len_min: 300,
            rq4_len_max: 1000,
            rq4_eps_k1: 5.0,
            rq4_eps_k2: 8.0,
            rq4_min_pts: 3,
            rq4_seed: 8,
            out_dir: PathBuf::from("out"),
            log_payloads: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok((Self::from_toml_str(&text)?, text))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Re-derives every component seed from one master seed.
    pub fn with_master_seed(mut self, master: u64) -> Self {
        let seeds = [
            &mut self.data_seed,
            &mut self.split_seed,
            &mut self.partition_seed,
            &mut self.svm_seed,
            &mut self.fl_seed,
            &mut self.forest_seed,
            &mut self.rq2_seed,
            &mut self.rq4_seed,
        ];
        for (i, s) in seeds.into_iter().enumerate() {
            *s = seed::derive(master, i as u64);
        }
        self
    }

    pub fn any_rq(&self) -> bool {
        self.rq1 || self.rq2 || self.rq3 || self.rq4
    }

    pub fn validate(&self) -> Result<()> {
        if !self.any_rq() {
            return Err(CliError::Config("no RQ enabled".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Config(format!("train_fraction {} outside (0,1)", self.train_fraction)));
        }
        if self.n_clients == 0 {
            return Err(CliError::Config("n_clients must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta_mcc_auc > 0.0 && self.delta_matrix > 0.0) {
            return Err(CliError::Config("δ values must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rq2_min_within) {
            return Err(CliError::Config("rq2_min_within outside [0,1]".into()));
        }
        if self.rounds == 0 {
            return Err(CliError::Config("rounds must be at least 1".into()));
        }
        if self.rq3_fixture_fl.is_some() != self.rq3_fixture_cl.is_some() {
            return Err(CliError::Config("rq3 fixtures must be given as a pair".into()));
        }
        if self.stability_groups == 0 {
            return Err(CliError::Config("stability_groups must be at least 1".into()));
        }
        self.svm_config().validate()?;
        self.forest_config().validate()?;
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: self.n_samples,
            n_features: self.n_features,
            positive_fraction: self.positive_fraction,
            sparsity: self.sparsity,
            class_separation: self.class_separation,
            seed: self.data_seed,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            lambda: self.svm_lambda,
            eta0: self.svm_eta0,
            decay: self.svm_decay,
            epochs_per_call: self.svm_epochs,
            seed: self.svm_seed,
            class_weights: self.svm_class_weights,
        }
    }

    pub fn fedsvm_options(&self) -> FedSvmOptions {
        FedSvmOptions { rounds: self.rounds, param_delta_tol: self.param_delta_tol, seed: self.fl_seed }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            feature_fraction: self.feature_fraction,
            sample_fraction: self.sample_fraction,
            seed: self.forest_seed,
            tree: TreeConfig {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                threshold_cap: (self.threshold_cap > 0).then_some(self.threshold_cap),
            },
        }
    }

    pub fn deltas(&self) -> Deltas {
        Deltas { default: self.delta, mcc_auc: self.delta_mcc_auc }
    }

    /// Overrides every δ with one value.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self.delta_mcc_auc = delta;
        self.delta_matrix = delta;
        self
    }

    pub fn heterogeneity_config(&self) -> HeterogeneityConfig {
        HeterogeneityConfig {
            n_groups: self.rq4_groups,
            len_range: (self.rq4_len_min, self.rq4_len_max),
            orders: vec![(1, self.rq4_eps_k1), (2, self.rq4_eps_k2)],
            min_pts: self.rq4_min_pts,
            seed: self.rq4_seed,
        }
    }
}
