//! Federated learning toolkit for failure prediction on imbalanced,
//! time-ordered manufacturing data.
//!
//! Two protocols are provided together with their centralized baselines:
//!
//! * [`fedsvm`]: horizontal federated linear SVM (parameter averaging between
//!   clients holding disjoint samples).
//! * [`fedrf`]: vertical federated random forest (server-coordinated CART
//!   construction where clients hold disjoint feature columns).
//!
//! The evaluation side ([`metrics`], [`markov`]) compares a federated model
//! against its centralized counterpart on whole test sets, random partial
//! groups, fitted Markov models of prediction error, and checks label
//! heterogeneity with DBSCAN over fitted transition matrices.

pub mod cart;
pub mod dataio;
pub mod error;
pub mod fedrf;
pub mod fedsvm;
pub mod markov;
pub mod metrics;
pub mod seed;
pub mod svm;
pub mod transcript;

pub use cart::{Forest, ForestConfig, GiniReport, TreeConfig, TreeNode};
pub use dataio::{Dataset, HorizontalPartition, PcaModel, SyntheticSpec, VerticalPartition};
pub use error::{Error, Result};
pub use fedrf::{FedRfOutput, FedTreeNode, VflMessage};
pub use fedsvm::{FedSvmOptions, ProtocolMessage};
pub use markov::{HeterogeneityReport, TransitionMatrix};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use svm::{LinearModel, SvmConfig};

/// Binary class label: 0 = qualified, 1 = faulty.
pub type Label = u8;
