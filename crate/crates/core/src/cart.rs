//! CART decision trees (Gini criterion, midpoint thresholds, accuracy-based
//! pre-pruning) and random forests over seeded feature/sample subsets.
//!
//! Split quality is compared exactly: the weighted Gini impurity of a binary
//! split is a rational number with an integer numerator and denominator, so
//! ties and "strictly better than the parent" are decided without rounding.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataio::{is_missing, Dataset};
use crate::error::{Error, Result};
use crate::{seed, Label};

/// Default number of candidate thresholds evaluated per feature.
pub const DEFAULT_THRESHOLD_CAP: usize = 64;

/// Exact weighted Gini impurity `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GiniKey {
    pub num: u128,
    pub den: u128,
}

impl GiniKey {
    /// Impurity of a node with the given class counts.
    pub fn node(counts: [usize; 2]) -> Self {
        let n = (counts[0] + counts[1]) as u128;
        let a = sq(counts[0]) + sq(counts[1]);
        Self { num: n * n - a, den: n * n }
    }

    /// `(n_L·G_L + n_R·G_R) / n` for the given side counts.
    pub fn split(left: [usize; 2], right: [usize; 2]) -> Self {
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        let n = nl + nr;
        let al = sq(left[0]) + sq(left[1]);
        let ar = sq(right[0]) + sq(right[1]);
        Self { num: n * nl * nr - al * nr - ar * nl, den: n * nl * nr }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Ord for GiniKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl PartialOrd for GiniKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn sq(c: usize) -> u128 {
    (c as u128) * (c as u128)
}

/// Best split found on a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniReport {
    pub feature: String,
    /// Column of `feature` in the dataset the split was computed on.
    pub feature_index: usize,
    pub threshold: f64,
    pub weighted_gini: f64,
    pub parent_gini: f64,
    pub key: GiniKey,
    pub left_counts: [usize; 2],
    pub right_counts: [usize; 2],
    pub needs_pruning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Maximum candidate thresholds per feature; `None` evaluates every midpoint.
    pub threshold_cap: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { threshold_cap: None, min_samples_leaf: 1 }
    }
}

pub fn class_counts(data: &Dataset, rows: &[usize]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for &r in rows {
        c[data.labels()[r] as usize] += 1;
    }
    c
}

/// Majority class, ties go to 0.
pub fn majority(counts: [usize; 2]) -> Label {
    u8::from(counts[1] > counts[0])
}

/// Candidate boundary positions in a sorted run of `m + 1` distinct-value
/// groups: all of them, or `cap` evenly spaced quantiles.
fn candidate_positions(m: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(cap) if cap > 0 && m > cap => (0..cap).map(|j| ((2 * j + 1) * m) / (2 * cap)).collect(),
        _ => (0..m).collect(),
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid >= b { a } else { mid }
}

/// Best Gini split of `rows` over the given feature columns.
///
/// Thresholds are midpoints between consecutive distinct values; samples
/// with `value <= threshold` go left. Ties are broken by feature name, then
/// by lower threshold. Returns `None` when no admissible split strictly
/// lowers the parent impurity.
pub fn best_split(data: &Dataset, rows: &[usize], features: &[usize], opts: &SplitOptions) -> Result<Option<GiniReport>> {
    if rows.is_empty() {
        return Err(Error::Contract("best_split on an empty node".into()));
    }
    if features.is_empty() {
        return Err(Error::Contract("best_split with no features".into()));
    }
    let parent_counts = class_counts(data, rows);
    let parent_key = GiniKey::node(parent_counts);
    let n = rows.len();
    let min_leaf = opts.min_samples_leaf.max(1);
    let mut best: Option<GiniReport> = None;
    let mut sorted: Vec<(f64, Label)> = Vec::with_capacity(n);

    for &col in features {
        sorted.clear();
        for &r in rows {
            let v = data.value(r, col);
            if is_missing(v) {
                return Err(Error::Precondition(format!("missing value in feature `{}`", data.feature_names()[col])));
            }
            sorted.push((v, data.labels()[r]));
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        // boundary positions b such that sorted[b].0 < sorted[b + 1].0
        let mut boundaries = Vec::new();
        let mut prefix = Vec::new();
        let mut left = [0usize; 2];
        for b in 0..n - 1 {
            left[sorted[b].1 as usize] += 1;
            if sorted[b].0 < sorted[b + 1].0 {
                boundaries.push(b);
                prefix.push(left);
            }
        }

        let name = &data.feature_names()[col];
        for pos in candidate_positions(boundaries.len(), opts.threshold_cap) {
            let b = boundaries[pos];
            let left = prefix[pos];
            let right = [parent_counts[0] - left[0], parent_counts[1] - left[1]];
            let nl = b + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let key = GiniKey::split(left, right);
            if key >= parent_key {
                continue;
            }
            let threshold = midpoint(sorted[b].0, sorted[b + 1].0);
            let better = match &best {
                None => true,
                Some(cur) => match key.cmp(&cur.key) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => (name.as_str(), threshold) < (cur.feature.as_str(), cur.threshold),
                },
            };
            if better {
                best = Some(GiniReport {
                    feature: name.clone(),
                    feature_index: col,
                    threshold,
                    weighted_gini: key.value(),
                    parent_gini: parent_key.value(),
                    key,
                    left_counts: left,
                    right_counts: right,
                    needs_pruning: false,
                });
            }
        }
    }
    Ok(best)
}

/// Whether a split should be refused: true unless routing the pruning rows
/// through the split gives strictly more correct majority votes than the
/// unsplit node. An empty routed pruning set never justifies a split.
pub fn needs_pruning(data: &Dataset, test_rows: &[usize], report: &GiniReport) -> bool {
    if test_rows.is_empty() {
        return true;
    }
    let parent_counts = [
        report.left_counts[0] + report.right_counts[0],
        report.left_counts[1] + report.right_counts[1],
    ];
    let node_label = majority(parent_counts);
    let left_label = majority(report.left_counts);
    let right_label = majority(report.right_counts);
    let mut before = 0usize;
    let mut after = 0usize;
    for &r in test_rows {
        let y = data.labels()[r];
        before += usize::from(y == node_label);
        let side = if data.value(r, report.feature_index) <= report.threshold { left_label } else { right_label };
        after += usize::from(y == side);
    }
    after <= before
}

/// Splits row indices by `value <= threshold`.
pub fn partition_rows(data: &Dataset, rows: &[usize], col: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| data.value(r, col) <= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        label: Label,
        class_counts: [usize; 2],
    },
    Split {
        feature: String,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub threshold_cap: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 8, min_samples_leaf: 1, threshold_cap: Some(DEFAULT_THRESHOLD_CAP) }
    }
}

impl TreeConfig {
    pub fn split_options(&self) -> SplitOptions {
        SplitOptions { threshold_cap: self.threshold_cap, min_samples_leaf: self.min_samples_leaf }
    }

    /// Node closes without consulting any split: pure labels, depth limit, or
    /// too few samples for two admissible children.
    pub fn is_terminal(&self, counts: [usize; 2], depth: usize) -> bool {
        let n = counts[0] + counts[1];
        counts[0] == 0 || counts[1] == 0 || depth >= self.max_depth || n < 2 * self.min_samples_leaf.max(1)
    }
}

/// Sample routing observed at one node during construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRouting {
    /// `""` for the root, then `L`/`R` per level.
    pub path: String,
    pub sample_ids: Vec<u64>,
    pub test_ids: Option<Vec<u64>>,
    pub leaf: bool,
}

pub fn sorted_ids(data: &Dataset, rows: &[usize]) -> Vec<u64> {
    let mut ids: Vec<u64> = rows.iter().map(|&r| data.ids()[r]).collect();
    ids.sort_unstable();
    ids
}

/// Recursive CART. `pruning_rows = None` disables pre-pruning.
pub fn build_tree(
    data: &Dataset,
    rows: &[usize],
    features: &[usize],
    pruning_rows: Option<&[usize]>,
    cfg: &TreeConfig,
) -> Result<TreeNode> {
    Ok(build_tree_traced(data, rows, features, pruning_rows, cfg)?.0)
}

/// Like [`build_tree`], also returning per-node routing in depth-first,
/// left-before-right order.
pub fn build_tree_traced(
    data: &Dataset,
    rows: &[usize],
    features: &[usize],
    pruning_rows: Option<&[usize]>,
    cfg: &TreeConfig,
) -> Result<(TreeNode, Vec<NodeRouting>)> {
    if rows.is_empty() {
        return Err(Error::Contract("cannot build a tree on no samples".into()));
    }
    if features.is_empty() {
        return Err(Error::Contract("cannot build a tree on no features".into()));
    }
    let mut trace = Vec::new();
    let mut path = String::new();
    let root = grow(data, rows, features, pruning_rows, cfg, 0, &mut path, &mut trace)?;
    Ok((root, trace))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    data: &Dataset,
    rows: &[usize],
    features: &[usize],
    pruning_rows: Option<&[usize]>,
    cfg: &TreeConfig,
    depth: usize,
    path: &mut String,
    trace: &mut Vec<NodeRouting>,
) -> Result<TreeNode> {
    let counts = class_counts(data, rows);
    let slot = trace.len();
    trace.push(NodeRouting {
        path: path.clone(),
        sample_ids: sorted_ids(data, rows),
        test_ids: pruning_rows.map(|t| sorted_ids(data, t)),
        leaf: true,
    });
    let leaf = TreeNode::Leaf { label: majority(counts), class_counts: counts };
    if cfg.is_terminal(counts, depth) {
        return Ok(leaf);
    }
    let Some(report) = best_split(data, rows, features, &cfg.split_options())? else {
        return Ok(leaf);
    };
    if let Some(test) = pruning_rows {
        if needs_pruning(data, test, &report) {
            return Ok(leaf);
        }
    }
    trace[slot].leaf = false;
    let (left_rows, right_rows) = partition_rows(data, rows, report.feature_index, report.threshold);
    let (left_test, right_test) = match pruning_rows {
        Some(t) => {
            let (l, r) = partition_rows(data, t, report.feature_index, report.threshold);
            (Some(l), Some(r))
        }
        None => (None, None),
    };
    path.push('L');
    let left = grow(data, &left_rows, features, left_test.as_deref(), cfg, depth + 1, path, trace)?;
    path.pop();
    path.push('R');
    let right = grow(data, &right_rows, features, right_test.as_deref(), cfg, depth + 1, path, trace)?;
    path.pop();
    Ok(TreeNode::Split { feature: report.feature, threshold: report.threshold, left: Box::new(left), right: Box::new(right) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub feature_fraction: f64,
    pub sample_fraction: f64,
    pub seed: u64,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 25, feature_fraction: 0.5, sample_fraction: 0.7, seed: 0, tree: TreeConfig::default() }
    }
}

/// Per-tree random draw: feature subset F′, training subset D′, pruning set T = D − D′.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDraw {
    pub features: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        for (name, f) in [("feature_fraction", self.feature_fraction), ("sample_fraction", self.sample_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} {f} outside (0,1]")));
            }
        }
        if self.tree.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }

    /// Seeded draw for tree `t`: features first, then samples, both without
    /// replacement and returned in ascending order.
    pub fn draw(&self, t: usize, n_features: usize, n_samples: usize) -> Result<TreeDraw> {
        let nf = (self.feature_fraction * n_features as f64).round() as usize;
        let ns = (self.sample_fraction * n_samples as f64).round() as usize;
        if nf == 0 {
            return Err(Error::Config(format!("feature_fraction {} selects no features of {n_features}", self.feature_fraction)));
        }
        if ns == 0 {
            return Err(Error::Config(format!("sample_fraction {} selects no samples of {n_samples}", self.sample_fraction)));
        }
        let tree_seed = seed::derive(self.seed, t as u64);
        let mut rng = seed::rng(tree_seed);
        let mut features = index::sample(&mut rng, n_features, nf.min(n_features)).into_vec();
        features.sort_unstable();
        let mut train = index::sample(&mut rng, n_samples, ns.min(n_samples)).into_vec();
        train.sort_unstable();
        let mut in_train = vec![false; n_samples];
        train.iter().for_each(|&r| in_train[r] = true);
        let test = (0..n_samples).filter(|&r| !in_train[r]).collect();
        Ok(TreeDraw { features, train, test, seed: tree_seed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTree {
    pub root: TreeNode,
    pub feature_subset: Vec<String>,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<ForestTree>,
}

pub fn build_forest(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    Ok(build_forest_traced(data, cfg)?.0)
}

/// When the sample draw covers all of D, T is empty and pruning is disabled.
pub fn build_forest_traced(data: &Dataset, cfg: &ForestConfig) -> Result<(Forest, Vec<Vec<NodeRouting>>)> {
    cfg.validate()?;
    if data.n_samples() == 0 {
        return Err(Error::Contract("empty training data".into()));
    }
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut traces = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let draw = cfg.draw(t, data.n_features(), data.n_samples())?;
        let pruning = (!draw.test.is_empty()).then_some(draw.test.as_slice());
        let (root, trace) = build_tree_traced(data, &draw.train, &draw.features, pruning, &cfg.tree)?;
        trees.push(ForestTree {
            root,
            feature_subset: draw.features.iter().map(|&c| data.feature_names()[c].clone()).collect(),
            sample_seed: draw.seed,
        });
        traces.push(trace);
    }
    Ok((Forest { trees }, traces))
}

/// Named feature values for routing a single sample.
pub trait FeatureSource {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureSource for HashMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl FeatureSource for BTreeMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// One dataset row viewed through a name → column map.
pub struct DatasetRow<'a> {
    data: &'a Dataset,
    columns: &'a HashMap<&'a str, usize>,
    row: usize,
}

impl FeatureSource for DatasetRow<'_> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.columns.get(name).map(|&c| self.data.value(self.row, c))
    }
}

pub fn column_map(data: &Dataset) -> HashMap<&str, usize> {
    data.feature_names().iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
}

/// Leaf reached by `x`, with its path.
pub fn tree_leaf<'t, S: FeatureSource + ?Sized>(tree: &'t TreeNode, x: &S) -> Result<(&'t TreeNode, String)> {
    let mut node = tree;
    let mut path = String::new();
    loop {
        match node {
            TreeNode::Leaf { .. } => return Ok((node, path)),
            TreeNode::Split { feature, threshold, left, right } => {
                let v = x.feature(feature).ok_or_else(|| Error::Routing(feature.clone()))?;
                if v <= *threshold {
                    path.push('L');
                    node = left;
                } else {
                    path.push('R');
                    node = right;
                }
            }
        }
    }
}

pub fn tree_predict<S: FeatureSource + ?Sized>(tree: &TreeNode, x: &S) -> Result<Label> {
    match tree_leaf(tree, x)?.0 {
        TreeNode::Leaf { label, .. } => Ok(*label),
        TreeNode::Split { .. } => unreachable!("tree_leaf stops at leaves"),
    }
}

/// Majority vote over per-tree labels; ties go to 0.
pub fn majority_vote(votes: &[Label]) -> Label {
    let ones = votes.iter().filter(|&&v| v == 1).count();
    u8::from(2 * ones > votes.len())
}

impl Forest {
    pub fn votes<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Vec<Label>> {
        self.trees.iter().map(|t| tree_predict(&t.root, x)).collect()
    }

    /// Labels and positive-vote fractions for every row of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<(Vec<Label>, Vec<f64>)> {
        let columns = column_map(data);
        let mut labels = Vec::with_capacity(data.n_samples());
        let mut scores = Vec::with_capacity(data.n_samples());
        for row in 0..data.n_samples() {
            let votes = self.votes(&DatasetRow { data, columns: &columns, row })?;
            labels.push(majority_vote(&votes));
            scores.push(votes.iter().filter(|&&v| v == 1).count() as f64 / votes.len() as f64);
        }
        Ok((labels, scores))
    }
}

pub fn forest_predict<S: FeatureSource + ?Sized>(forest: &Forest, x: &S) -> Result<Label> {
    Ok(majority_vote(&forest.votes(x)?))
}

/// Runs `f` with a row view over `data`.
pub fn with_row<T>(data: &Dataset, row: usize, f: impl FnOnce(&DatasetRow<'_>) -> T) -> T {
    let columns = column_map(data);
    f(&DatasetRow { data, columns: &columns, row })
}
