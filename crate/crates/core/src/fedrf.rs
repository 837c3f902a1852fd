//! Vertical federated random forest. Clients share sample ids and labels but
//! hold disjoint feature columns; a server coordinates each split.
//!
//! Per tree:
//!
//! 1. server → clients `InitSubsets` (the client's share of F′, D′ and T);
//! 2. at every open node each client answers `LocalBest` with its best
//!    local split (feature identity and exact Gini, never the threshold);
//! 3. server picks the global best and sends `Prune` to everyone, or
//!    `Success` to the winner;
//! 4. the winner splits D′ and T by its private threshold and answers
//!    `SplitSets` with the four id sets, which the server `Relay`s to the
//!    other clients.
//!
//! Nodes are expanded depth-first, left before right. Pure nodes, the depth
//! limit and the leaf-size limit close a node on every party without any
//! message, since all parties see the labels.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cart::{
    best_split, class_counts, majority, needs_pruning, partition_rows, ForestConfig, GiniKey, NodeRouting,
    TreeConfig,
};
use crate::dataio::{Dataset, VerticalPartition};
use crate::error::{Error, Result};
use crate::fedsvm::Party;
use crate::transcript::TranscriptRecord;
use crate::Label;

/// A client's best local split as uploaded to the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBest {
    pub feature: String,
    /// Position of `feature` in the client's F′ list.
    pub ordinal: usize,
    pub key: GiniKey,
    pub weighted_gini: f64,
    pub needs_pruning: bool,
}

/// Child id sets of one split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSets {
    pub left_train: Vec<u64>,
    pub right_train: Vec<u64>,
    pub left_test: Vec<u64>,
    pub right_test: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VflKind {
    InitSubsets { features: Vec<String>, train_ids: Vec<u64>, test_ids: Vec<u64> },
    LocalBest { report: Option<LocalBest> },
    Prune,
    Success,
    SplitSets { sets: SplitSets },
    Relay { owner: usize, sets: SplitSets },
}

impl VflKind {
    pub fn name(&self) -> &'static str {
        match self {
            VflKind::InitSubsets { .. } => "InitSubsets",
            VflKind::LocalBest { .. } => "LocalBest",
            VflKind::Prune => "Prune",
            VflKind::Success => "Success",
            VflKind::SplitSets { .. } => "SplitSets",
            VflKind::Relay { .. } => "Relay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VflMessage {
    pub tree: usize,
    /// Node path, `""` for the root then `L`/`R` per level.
    pub path: String,
    pub sender: Party,
    pub recipient: Party,
    pub kind: VflKind,
}

impl VflMessage {
    fn to_client(tree: usize, path: &str, client: usize, kind: VflKind) -> Self {
        Self { tree, path: path.to_string(), sender: Party::Server, recipient: Party::Client(client), kind }
    }

    fn to_server(tree: usize, path: &str, client: usize, kind: VflKind) -> Self {
        Self { tree, path: path.to_string(), sender: Party::Client(client), recipient: Party::Server, kind }
    }

    pub fn to_record(&self, run_id: &str, inline_payload: bool) -> TranscriptRecord {
        let payload = json!({
            "recipient": self.recipient.to_string(),
            "path": self.path,
            "body": self.kind,
        });
        TranscriptRecord::new(run_id, self.tree as u64, self.sender.to_string(), self.kind.name(), payload, inline_payload)
    }
}

/// Server-side node: owner and routed id sets, no thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FedTreeNode {
    Leaf {
        label: Label,
        class_counts: [usize; 2],
        sample_ids: Vec<u64>,
        test_ids: Option<Vec<u64>>,
    },
    Split {
        owner_client: usize,
        feature: String,
        sample_ids: Vec<u64>,
        test_ids: Option<Vec<u64>>,
        left: Box<FedTreeNode>,
        right: Box<FedTreeNode>,
    },
}

impl FedTreeNode {
    pub fn depth(&self) -> usize {
        match self {
            FedTreeNode::Leaf { .. } => 0,
            FedTreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Per-node routing in depth-first, left-before-right order.
    pub fn routing(&self) -> Vec<NodeRouting> {
        fn walk(node: &FedTreeNode, path: &mut String, out: &mut Vec<NodeRouting>) {
            let (sample_ids, test_ids, leaf) = match node {
                FedTreeNode::Leaf { sample_ids, test_ids, .. } => (sample_ids, test_ids, true),
                FedTreeNode::Split { sample_ids, test_ids, .. } => (sample_ids, test_ids, false),
            };
            out.push(NodeRouting { path: path.clone(), sample_ids: sample_ids.clone(), test_ids: test_ids.clone(), leaf });
            if let FedTreeNode::Split { left, right, .. } = node {
                path.push('L');
                walk(left, path, out);
                path.pop();
                path.push('R');
                walk(right, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, &mut String::new(), &mut out);
        out
    }

    /// `(path, label)` of every leaf.
    pub fn leaves(&self) -> Vec<(String, Label)> {
        fn walk(node: &FedTreeNode, path: &mut String, out: &mut Vec<(String, Label)>) {
            match node {
                FedTreeNode::Leaf { label, .. } => out.push((path.clone(), *label)),
                FedTreeNode::Split { left, right, .. } => {
                    path.push('L');
                    walk(left, path, out);
                    path.pop();
                    path.push('R');
                    walk(right, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut String::new(), &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSplit {
    pub feature: String,
    pub threshold: f64,
}

/// Client-side view of a global tree. Splits owned by other clients carry
/// only the owner index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialTreeNode {
    Leaf,
    Split {
        owner_client: usize,
        local: Option<LocalSplit>,
        left: Box<PartialTreeNode>,
        right: Box<PartialTreeNode>,
    },
}

impl PartialTreeNode {
    pub fn threshold_known_locally(&self) -> bool {
        matches!(self, PartialTreeNode::Split { local: Some(_), .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedTree {
    pub root: FedTreeNode,
    pub feature_subset: Vec<String>,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedRfOutput {
    pub server_trees: Vec<FedTree>,
    /// `client_trees[i][t]` is client `i`'s view of tree `t`.
    pub client_trees: Vec<Vec<PartialTreeNode>>,
    pub transcript: Vec<VflMessage>,
}

impl FedRfOutput {
    pub fn routing_traces(&self) -> Vec<Vec<NodeRouting>> {
        self.server_trees.iter().map(|t| t.root.routing()).collect()
    }

    pub fn records(&self, run_id: &str, inline_payload: bool) -> Vec<TranscriptRecord> {
        self.transcript.iter().map(|m| m.to_record(run_id, inline_payload)).collect()
    }

    pub fn n_trees(&self) -> usize {
        self.server_trees.len()
    }
}

/// Client-local best split over `features` (local columns) on the node's
/// rows. Returns the report to upload plus the retained `(column, threshold)`.
pub fn client_local_best(
    data: &Dataset,
    features: &[usize],
    train_rows: &[usize],
    test_rows: Option<&[usize]>,
    cfg: &TreeConfig,
) -> Result<Option<(LocalBest, usize, f64)>> {
    if train_rows.is_empty() {
        return Err(Error::Protocol("local best requested on an empty node".into()));
    }
    if features.is_empty() {
        return Ok(None);
    }
    let Some(report) = best_split(data, train_rows, features, &cfg.split_options())? else {
        return Ok(None);
    };
    let prune = test_rows.is_some_and(|t| needs_pruning(data, t, &report));
    let ordinal = features.iter().position(|&c| c == report.feature_index).expect("reported feature is in F′");
    let best = LocalBest {
        feature: report.feature,
        ordinal,
        key: report.key,
        weighted_gini: report.weighted_gini,
        needs_pruning: prune,
    };
    Ok(Some((best, report.feature_index, report.threshold)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalDecision {
    Prune,
    Winner(usize),
}

/// Lowest weighted Gini wins; ties go to the lower feature name, then the
/// lower client index. Prune when nobody has a split or the winner's split
/// fails the pruning check.
pub fn server_select_global(reports: &[Option<LocalBest>]) -> GlobalDecision {
    let winner = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
        .min_by(|(i, a), (j, b)| a.key.cmp(&b.key).then_with(|| a.feature.cmp(&b.feature)).then_with(|| i.cmp(j)));
    match winner {
        Some((i, r)) if !r.needs_pruning => GlobalDecision::Winner(i),
        _ => GlobalDecision::Prune,
    }
}

/// The winner's id-level split of D′ and T at its retained threshold.
pub fn winner_split_and_relay(
    data: &Dataset,
    retained: Option<(usize, f64)>,
    train_rows: &[usize],
    test_rows: &[usize],
) -> Result<SplitSets> {
    let (col, threshold) = retained.ok_or_else(|| Error::Protocol("split requested without a retained threshold".into()))?;
    let ids = |rows: Vec<usize>| rows.into_iter().map(|r| data.ids()[r]).collect::<Vec<u64>>();
    let (lt, rt) = partition_rows(data, train_rows, col, threshold);
    let (ls, rs) = partition_rows(data, test_rows, col, threshold);
    Ok(SplitSets { left_train: ids(lt), right_train: ids(rt), left_test: ids(ls), right_test: ids(rs) })
}


#[derive(Debug, Clone)]
struct Frame {
    slot: usize,
    path: String,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Frame {
    fn children(&self, left_slot: usize, lt: Vec<usize>, rt: Vec<usize>, ls: Vec<usize>, rs: Vec<usize>) -> [Frame; 2] {
        // pushed in this order so the left child is popped first
        [
            Frame { slot: left_slot + 1, path: format!("{}R", self.path), train: rt, test: rs },
            Frame { slot: left_slot, path: format!("{}L", self.path), train: lt, test: ls },
        ]
    }
}

fn rows_of(row_of: &HashMap<u64, usize>, ids: &[u64]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| row_of.get(id).copied().ok_or_else(|| Error::Protocol(format!("unknown sample id {id}"))))
        .collect()
}

/// Checks that the two children partition the parent's rows.
fn check_partition(parent: &[usize], left: &[usize], right: &[usize], what: &str) -> Result<()> {
    let mut a = parent.to_vec();
    let mut b: Vec<usize> = left.iter().chain(right).copied().collect();
    a.sort_unstable();
    b.sort_unstable();
    if a == b {
        Ok(())
    } else {
        Err(Error::Protocol(format!("{what} id sets do not partition the node")))
    }
}

fn take_open(current: &mut Option<Frame>, tree: usize, msg: &VflMessage) -> Result<Frame> {
    match current {
        Some(f) if f.path == msg.path && tree == msg.tree => Ok(current.take().expect("checked above")),
        _ => Err(Error::Protocol(format!(
            "{} for tree {} node `{}` does not match the open node",
            msg.kind.name(),
            msg.tree,
            msg.path
        ))),
    }
}

#[derive(Debug, Clone)]
enum ClientSlot {
    Open,
    Leaf,
    Split { owner: usize, local: Option<LocalSplit>, left: usize, right: usize },
}

fn assemble_client(arena: &[ClientSlot], slot: usize) -> PartialTreeNode {
    match &arena[slot] {
        ClientSlot::Open => unreachable!("finished trees have no open nodes"),
        ClientSlot::Leaf => PartialTreeNode::Leaf,
        ClientSlot::Split { owner, local, left, right } => PartialTreeNode::Split {
            owner_client: *owner,
            local: local.clone(),
            left: Box::new(assemble_client(arena, *left)),
            right: Box::new(assemble_client(arena, *right)),
        },
    }
}

struct ClientBuild {
    tree: usize,
    features: Vec<usize>,
    pruning: bool,
    arena: Vec<ClientSlot>,
    stack: Vec<Frame>,
    current: Option<Frame>,
    retained: Option<(usize, f64)>,
}

impl ClientBuild {
    fn split(&mut self, frame: &Frame, owner: usize, local: Option<LocalSplit>, rows: [Vec<usize>; 4]) {
        let [lt, rt, ls, rs] = rows;
        let left = self.arena.len();
        self.arena.extend([ClientSlot::Open, ClientSlot::Open]);
        self.arena[frame.slot] = ClientSlot::Split { owner, local, left, right: left + 1 };
        self.stack.extend(frame.children(left, lt, rt, ls, rs));
    }
}

/// One client's protocol state.
pub struct FedRfClient<'a> {
    pub client_id: usize,
    data: &'a Dataset,
    cfg: TreeConfig,
    row_of: HashMap<u64, usize>,
    build: Option<ClientBuild>,
    pub trees: Vec<PartialTreeNode>,
}

impl<'a> FedRfClient<'a> {
    pub fn new(client_id: usize, data: &'a Dataset, cfg: TreeConfig) -> Self {
        let row_of = data.ids().iter().enumerate().map(|(r, &id)| (id, r)).collect();
        Self { client_id, data, cfg, row_of, build: None, trees: Vec::new() }
    }

    pub fn idle(&self) -> bool {
        self.build.is_none()
    }

    pub fn step(&mut self, msg: &VflMessage) -> Result<Vec<VflMessage>> {
        if msg.recipient != Party::Client(self.client_id) || msg.sender != Party::Server {
            return Err(Error::Protocol(format!("client {} got a misrouted {} message", self.client_id, msg.kind.name())));
        }
        match &msg.kind {
            VflKind::InitSubsets { features, train_ids, test_ids } => {
                if self.build.is_some() {
                    return Err(Error::Protocol(format!("client {}: InitSubsets while a tree is open", self.client_id)));
                }
                let features = features
                    .iter()
                    .map(|f| self.data.feature_index(f).ok_or_else(|| Error::UnknownFeature(f.clone())))
                    .collect::<Result<Vec<_>>>()?;
                let train = rows_of(&self.row_of, train_ids)?;
                let test = rows_of(&self.row_of, test_ids)?;
                self.build = Some(ClientBuild {
                    tree: msg.tree,
                    features,
                    pruning: !test.is_empty(),
                    arena: vec![ClientSlot::Open],
                    stack: vec![Frame { slot: 0, path: String::new(), train, test }],
                    current: None,
                    retained: None,
                });
                self.advance()
            }
            VflKind::Prune => {
                let b = self.open_build(msg)?;
                let frame = take_open(&mut b.current, b.tree, msg)?;
                b.arena[frame.slot] = ClientSlot::Leaf;
                b.retained = None;
                self.advance()
            }
            VflKind::Success => {
                let data = self.data;
                let client_id = self.client_id;
                let b = self.open_build(msg)?;
                let frame = take_open(&mut b.current, b.tree, msg)?;
                let retained = b.retained.take();
                let sets = winner_split_and_relay(data, retained, &frame.train, &frame.test)?;
                let (col, threshold) = retained.expect("checked by winner_split_and_relay");
                let (lt, rt) = partition_rows(data, &frame.train, col, threshold);
                let (ls, rs) = partition_rows(data, &frame.test, col, threshold);
                let local = LocalSplit { feature: data.feature_names()[col].clone(), threshold };
                b.split(&frame, client_id, Some(local), [lt, rt, ls, rs]);
                let mut out = vec![VflMessage::to_server(msg.tree, &msg.path, client_id, VflKind::SplitSets { sets })];
                out.extend(self.advance()?);
                Ok(out)
            }
            VflKind::Relay { owner, sets } => {
                if *owner == self.client_id {
                    return Err(Error::Protocol(format!("client {} was relayed its own split", self.client_id)));
                }
                let rows = [&sets.left_train, &sets.right_train, &sets.left_test, &sets.right_test]
                    .map(|ids| rows_of(&self.row_of, ids));
                let b = self.open_build(msg)?;
                let frame = take_open(&mut b.current, b.tree, msg)?;
                b.retained = None;
                let [lt, rt, ls, rs] = rows;
                let (lt, rt, ls, rs) = (lt?, rt?, ls?, rs?);
                check_partition(&frame.train, &lt, &rt, "relayed train")?;
                check_partition(&frame.test, &ls, &rs, "relayed test")?;
                b.split(&frame, *owner, None, [lt, rt, ls, rs]);
                self.advance()
            }
            other => Err(Error::Protocol(format!("client {} cannot handle {}", self.client_id, other.name()))),
        }
    }

    fn open_build(&mut self, msg: &VflMessage) -> Result<&mut ClientBuild> {
        self.build.as_mut().ok_or_else(|| Error::Protocol(format!("{} outside a tree", msg.kind.name())))
    }

    /// Closes terminal nodes until one needs a decision and returns its
    /// `LocalBest`; finishes the tree when no node is left.
    fn advance(&mut self) -> Result<Vec<VflMessage>> {
        let b = self.build.as_mut().expect("advance with an open tree");
        while let Some(frame) = b.stack.pop() {
            let counts = class_counts(self.data, &frame.train);
            if self.cfg.is_terminal(counts, frame.path.len()) {
                b.arena[frame.slot] = ClientSlot::Leaf;
                continue;
            }
            let test = b.pruning.then_some(frame.test.as_slice());
            let found = client_local_best(self.data, &b.features, &frame.train, test, &self.cfg)?;
            b.retained = found.as_ref().map(|(_, c, t)| (*c, *t));
            let report = found.map(|(r, _, _)| r);
            let out = VflMessage::to_server(b.tree, &frame.path, self.client_id, VflKind::LocalBest { report });
            b.current = Some(frame);
            return Ok(vec![out]);
        }
        let b = self.build.take().expect("open tree");
        self.trees.push(assemble_client(&b.arena, 0));
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone)]
enum ServerSlot {
    Open,
    Leaf { counts: [usize; 2], sample_ids: Vec<u64>, test_ids: Option<Vec<u64>> },
    Split { owner: usize, feature: String, sample_ids: Vec<u64>, test_ids: Option<Vec<u64>>, left: usize, right: usize },
}

fn assemble_server(arena: &[ServerSlot], slot: usize) -> FedTreeNode {
    match &arena[slot] {
        ServerSlot::Open => unreachable!("finished trees have no open nodes"),
        ServerSlot::Leaf { counts, sample_ids, test_ids } => FedTreeNode::Leaf {
            label: majority(*counts),
            class_counts: *counts,
            sample_ids: sample_ids.clone(),
            test_ids: test_ids.clone(),
        },
        ServerSlot::Split { owner, feature, sample_ids, test_ids, left, right } => FedTreeNode::Split {
            owner_client: *owner,
            feature: feature.clone(),
            sample_ids: sample_ids.clone(),
            test_ids: test_ids.clone(),
            left: Box::new(assemble_server(arena, *left)),
            right: Box::new(assemble_server(arena, *right)),
        },
    }
}

enum Awaiting {
    Nothing,
    Reports(Vec<Option<Option<LocalBest>>>),
    Split { winner: usize, feature: String },
}

struct ServerBuild {
    tree: usize,
    pruning: bool,
    feature_subset: Vec<String>,
    sample_seed: u64,
    arena: Vec<ServerSlot>,
    stack: Vec<Frame>,
    current: Option<Frame>,
    awaiting: Awaiting,
}

/// Server protocol state. Holds sample ids and labels, never feature values.
pub struct FedRfServer {
    ids: Vec<u64>,
    labels: Vec<Label>,
    row_of: HashMap<u64, usize>,
    client_features: Vec<Vec<String>>,
    cfg: ForestConfig,
    next_tree: usize,
    build: Option<ServerBuild>,
    pub trees: Vec<FedTree>,
}

impl FedRfServer {
    pub fn new(ids: Vec<u64>, labels: Vec<Label>, client_features: Vec<Vec<String>>, cfg: ForestConfig) -> Result<Self> {
        cfg.validate()?;
        if client_features.is_empty() {
            return Err(Error::Partition("no clients".into()));
        }
        if ids.is_empty() || ids.len() != labels.len() {
            return Err(Error::Contract("server needs one label per sample id".into()));
        }
        let row_of = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        Ok(Self { ids, labels, row_of, client_features, cfg, next_tree: 0, build: None, trees: Vec::new() })
    }

    pub fn k(&self) -> usize {
        self.client_features.len()
    }

    pub fn done(&self) -> bool {
        self.build.is_none() && self.next_tree >= self.cfg.n_trees
    }

    pub fn start(&mut self) -> Result<Vec<VflMessage>> {
        if self.next_tree != 0 || self.build.is_some() {
            return Err(Error::Protocol("server already started".into()));
        }
        let mut out = self.start_tree()?;
        out.extend(self.advance()?);
        Ok(out)
    }

    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let mut c = [0usize; 2];
        rows.iter().for_each(|&r| c[self.labels[r] as usize] += 1);
        c
    }

    /// Draws F′, D′ and T for the next tree over the concatenated client
    /// feature list, exactly as the centralized forest draws them.
    fn start_tree(&mut self) -> Result<Vec<VflMessage>> {
        let t = self.next_tree;
        if t >= self.cfg.n_trees {
            return Ok(Vec::new());
        }
        self.next_tree += 1;
        let owners: Vec<(usize, &String)> =
            self.client_features.iter().enumerate().flat_map(|(i, f)| f.iter().map(move |n| (i, n))).collect();
        let draw = self.cfg.draw(t, owners.len(), self.ids.len())?;
        let mut per_client = vec![Vec::new(); self.k()];
        for &g in &draw.features {
            per_client[owners[g].0].push(owners[g].1.clone());
        }
        let feature_subset = draw.features.iter().map(|&g| owners[g].1.clone()).collect();
        let train_ids: Vec<u64> = draw.train.iter().map(|&r| self.ids[r]).collect();
        let test_ids: Vec<u64> = draw.test.iter().map(|&r| self.ids[r]).collect();
        let out = per_client
            .into_iter()
            .enumerate()
            .map(|(i, features)| {
                let kind = VflKind::InitSubsets { features, train_ids: train_ids.clone(), test_ids: test_ids.clone() };
                VflMessage::to_client(t, "", i, kind)
            })
            .collect();
        self.build = Some(ServerBuild {
            tree: t,
            pruning: !draw.test.is_empty(),
            feature_subset,
            sample_seed: draw.seed,
            arena: vec![ServerSlot::Open],
            stack: vec![Frame { slot: 0, path: String::new(), train: draw.train, test: draw.test }],
            current: None,
            awaiting: Awaiting::Nothing,
        });
        Ok(out)
    }

    /// Closes terminal nodes until one needs reports, finishing trees and
    /// starting the next ones as they run out of nodes.
    fn advance(&mut self) -> Result<Vec<VflMessage>> {
        let mut out = Vec::new();
        let k = self.k();
        loop {
            let Some(b) = self.build.as_mut() else { return Ok(out) };
            match b.stack.pop() {
                Some(frame) => {
                    let counts = {
                        let mut c = [0usize; 2];
                        frame.train.iter().for_each(|&r| c[self.labels[r] as usize] += 1);
                        c
                    };
                    if self.cfg.tree.is_terminal(counts, frame.path.len()) {
                        let sample_ids = sorted_rows(&self.ids, &frame.train);
                        let test_ids = b.pruning.then(|| sorted_rows(&self.ids, &frame.test));
                        b.arena[frame.slot] = ServerSlot::Leaf { counts, sample_ids, test_ids };
                        continue;
                    }
                    b.current = Some(frame);
                    b.awaiting = Awaiting::Reports(vec![None; k]);
                    return Ok(out);
                }
                None => {
                    let b = self.build.take().expect("open tree");
                    self.trees.push(FedTree {
                        root: assemble_server(&b.arena, 0),
                        feature_subset: b.feature_subset,
                        sample_seed: b.sample_seed,
                    });
                    out.extend(self.start_tree()?);
                }
            }
        }
    }

    pub fn receive(&mut self, msg: &VflMessage) -> Result<Vec<VflMessage>> {
        let Party::Client(from) = msg.sender else {
            return Err(Error::Protocol("server received a message from itself".into()));
        };
        if from >= self.k() || msg.recipient != Party::Server {
            return Err(Error::Protocol(format!("misrouted {} message from client {from}", msg.kind.name())));
        }
        let k = self.k();
        let b = self
            .build
            .as_mut()
            .ok_or_else(|| Error::Protocol(format!("{} from client {from} with no open tree", msg.kind.name())))?;
        let on_current = b.current.as_ref().is_some_and(|f| f.path == msg.path) && b.tree == msg.tree;
        if !on_current {
            return Err(Error::Protocol(format!(
                "{} from client {from} for tree {} node `{}` does not match the open node",
                msg.kind.name(),
                msg.tree,
                msg.path
            )));
        }
        match (&msg.kind, &mut b.awaiting) {
            (VflKind::LocalBest { report }, Awaiting::Reports(slots)) => {
                if slots[from].is_some() {
                    return Err(Error::Protocol(format!("duplicate LocalBest from client {from}")));
                }
                slots[from] = Some(report.clone());
                if slots.iter().any(Option::is_none) {
                    return Ok(Vec::new());
                }
                let reports: Vec<Option<LocalBest>> = slots.iter_mut().map(|s| s.take().expect("all present")).collect();
                match server_select_global(&reports) {
                    GlobalDecision::Prune => {
                        let frame = b.current.take().expect("open node");
                        let counts = self.counts(&frame.train);
                        let b = self.build.as_mut().expect("open tree");
                        let sample_ids = sorted_rows(&self.ids, &frame.train);
                        let test_ids = b.pruning.then(|| sorted_rows(&self.ids, &frame.test));
                        b.arena[frame.slot] = ServerSlot::Leaf { counts, sample_ids, test_ids };
                        b.awaiting = Awaiting::Nothing;
                        let mut out: Vec<VflMessage> =
                            (0..k).map(|i| VflMessage::to_client(msg.tree, &msg.path, i, VflKind::Prune)).collect();
                        out.extend(self.advance()?);
                        Ok(out)
                    }
                    GlobalDecision::Winner(w) => {
                        let feature = reports[w].as_ref().expect("winner reported").feature.clone();
                        b.awaiting = Awaiting::Split { winner: w, feature };
                        Ok(vec![VflMessage::to_client(msg.tree, &msg.path, w, VflKind::Success)])
                    }
                }
            }
            (VflKind::SplitSets { sets }, Awaiting::Split { winner, feature }) if *winner == from => {
                let feature = std::mem::take(feature);
                let frame = b.current.take().expect("open node");
                let [lt, rt, ls, rs] =
                    [&sets.left_train, &sets.right_train, &sets.left_test, &sets.right_test].map(|ids| rows_of(&self.row_of, ids));
                let (lt, rt, ls, rs) = (lt?, rt?, ls?, rs?);
                check_partition(&frame.train, &lt, &rt, "train")?;
                check_partition(&frame.test, &ls, &rs, "test")?;
                if lt.is_empty() || rt.is_empty() {
                    return Err(Error::Protocol(format!("client {from} produced an empty child")));
                }
                let sample_ids = sorted_rows(&self.ids, &frame.train);
                let test_ids = b.pruning.then(|| sorted_rows(&self.ids, &frame.test));
                let left = b.arena.len();
                b.arena.extend([ServerSlot::Open, ServerSlot::Open]);
                b.arena[frame.slot] =
                    ServerSlot::Split { owner: from, feature, sample_ids, test_ids, left, right: left + 1 };
                b.stack.extend(frame.children(left, lt, rt, ls, rs));
                b.awaiting = Awaiting::Nothing;
                let mut out: Vec<VflMessage> = (0..k)
                    .filter(|&i| i != from)
                    .map(|i| {
                        VflMessage::to_client(msg.tree, &msg.path, i, VflKind::Relay { owner: from, sets: sets.clone() })
                    })
                    .collect();
                out.extend(self.advance()?);
                Ok(out)
            }
            (kind, _) => Err(Error::Protocol(format!("unexpected {} from client {from}", kind.name()))),
        }
    }
}

fn sorted_rows(ids: &[u64], rows: &[usize]) -> Vec<u64> {
    let mut out: Vec<u64> = rows.iter().map(|&r| ids[r]).collect();
    out.sort_unstable();
    out
}

/// Runs the full protocol over a vertical partition. Client work for one
/// delivery batch runs in parallel; delivery order is fixed, so the
/// transcript is deterministic.
pub fn run_fedrf(partition: &VerticalPartition, cfg: &ForestConfig) -> Result<FedRfOutput> {
    partition.validate()?;
    let first = &partition.clients[0];
    let mut server = FedRfServer::new(
        first.ids().to_vec(),
        first.labels().to_vec(),
        partition.clients.iter().map(|c| c.feature_names().to_vec()).collect(),
        cfg.clone(),
    )?;
    let k = partition.k();
    let mut clients: Vec<FedRfClient<'_>> =
        partition.clients.iter().enumerate().map(|(i, d)| FedRfClient::new(i, d, cfg.tree)).collect();

    let mut transcript = Vec::new();
    let mut queue: VecDeque<VflMessage> = server.start()?.into();
    while !queue.is_empty() {
        let batch: Vec<VflMessage> = queue.drain(..).collect();
        let mut to_server = Vec::new();
        let mut inbox: Vec<Vec<&VflMessage>> = vec![Vec::new(); k];
        for m in &batch {
            match m.recipient {
                Party::Server => to_server.push(m),
                Party::Client(i) if i < k => inbox[i].push(m),
                Party::Client(i) => return Err(Error::Protocol(format!("message for unknown client {i}"))),
            }
        }
        let replies: Vec<Result<Vec<VflMessage>>> = clients
            .par_iter_mut()
            .zip(inbox.par_iter())
            .map(|(c, msgs)| {
                let mut out = Vec::new();
                for m in msgs {
                    out.extend(c.step(m)?);
                }
                Ok(out)
            })
            .collect();
        for m in to_server {
            queue.extend(server.receive(m)?);
        }
        for r in replies {
            queue.extend(r?);
        }
        transcript.extend(batch);
    }
    if !server.done() || clients.iter().any(|c| !c.idle()) {
        return Err(Error::Protocol("protocol stalled before all trees were finished".into()));
    }
    let client_trees = clients.into_iter().map(|c| c.trees).collect();
    Ok(FedRfOutput { server_trees: server.trees, client_trees, transcript })
}

/// Leaf paths each sample of `data` may reach in a client's partial tree:
/// owned splits route by the retained threshold, foreign splits send the
/// sample both ways. Returns `path → ids` in sample order.
pub fn client_leaf_candidates(tree: &PartialTreeNode, data: &Dataset) -> Result<HashMap<String, Vec<u64>>> {
    fn visit(
        node: &PartialTreeNode,
        data: &Dataset,
        cols: &HashMap<&str, usize>,
        row: usize,
        path: &mut String,
        out: &mut HashMap<String, Vec<u64>>,
    ) -> Result<()> {
        match node {
            PartialTreeNode::Leaf => {
                out.entry(path.clone()).or_default().push(data.ids()[row]);
                Ok(())
            }
            PartialTreeNode::Split { local, left, right, .. } => {
                let (go_left, go_right) = match local {
                    Some(s) => {
                        let col = *cols.get(s.feature.as_str()).ok_or_else(|| Error::Routing(s.feature.clone()))?;
                        let left = data.value(row, col) <= s.threshold;
                        (left, !left)
                    }
                    None => (true, true),
                };
                if go_left {
                    path.push('L');
                    visit(left, data, cols, row, path, out)?;
                    path.pop();
                }
                if go_right {
                    path.push('R');
                    visit(right, data, cols, row, path, out)?;
                    path.pop();
                }
                Ok(())
            }
        }
    }
    let cols = crate::cart::column_map(data);
    let mut out = HashMap::new();
    let mut path = String::new();
    for row in 0..data.n_samples() {
        visit(tree, data, &cols, row, &mut path, &mut out)?;
    }
    Ok(out)
}

/// For each sample (by row of the clients' shared id order), the index into
/// `server_tree.leaves()` of the unique leaf in every client's candidate set.
pub fn intersect_leaves(
    server_tree: &FedTreeNode,
    candidates: &[HashMap<String, Vec<u64>>],
    ids: &[u64],
) -> Result<Vec<usize>> {
    let row_of: HashMap<u64, usize> = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let k = candidates.len() as u32;
    let mut hits = vec![0u32; ids.len()];
    let mut assigned: Vec<Option<usize>> = vec![None; ids.len()];
    for (li, (path, _)) in server_tree.leaves().iter().enumerate() {
        let lists: Vec<&[u64]> = candidates.iter().map(|c| c.get(path).map_or(&[][..], Vec::as_slice)).collect();
        for list in &lists {
            for id in *list {
                let r = *row_of.get(id).ok_or_else(|| Error::Integrity(format!("candidate id {id} not in the batch")))?;
                hits[r] += 1;
            }
        }
        for id in lists.first().copied().unwrap_or(&[]) {
            let r = row_of[id];
            if hits[r] == k {
                if assigned[r].is_some() {
                    return Err(Error::Integrity(format!("sample {id} lands in two leaves")));
                }
                assigned[r] = Some(li);
            }
        }
        for list in &lists {
            for id in *list {
                hits[row_of[id]] = 0;
            }
        }
    }
    assigned
        .into_iter()
        .zip(ids)
        .map(|(a, id)| a.ok_or_else(|| Error::Integrity(format!("sample {id} lands in no leaf"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedRfPrediction {
    pub labels: Vec<Label>,
    /// Fraction of trees voting 1.
    pub scores: Vec<f64>,
    /// `leaf_paths[t][i]` is the leaf of sample `i` in tree `t`.
    pub leaf_paths: Vec<Vec<String>>,
}

/// Leaf-intersection prediction of new samples held vertically by the
/// same clients that trained `model`.
pub fn fedrf_predict(model: &FedRfOutput, samples: &VerticalPartition) -> Result<FedRfPrediction> {
    samples.validate()?;
    let k = samples.k();
    if model.client_trees.len() != k {
        return Err(Error::Contract(format!("model has {} clients, samples have {k}", model.client_trees.len())));
    }
    if model.client_trees.iter().any(|t| t.len() != model.n_trees()) {
        return Err(Error::Contract("client tree counts disagree with the server".into()));
    }
    let ids = samples.clients[0].ids();
    let n = ids.len();
    let mut ones = vec![0usize; n];
    let mut leaf_paths = Vec::with_capacity(model.n_trees());
    for (t, tree) in model.server_trees.iter().enumerate() {
        let candidates = samples
            .clients
            .par_iter()
            .enumerate()
            .map(|(i, d)| client_leaf_candidates(&model.client_trees[i][t], d))
            .collect::<Result<Vec<_>>>()?;
        let leaves = tree.root.leaves();
        let hit = intersect_leaves(&tree.root, &candidates, ids)?;
        for (r, &li) in hit.iter().enumerate() {
            ones[r] += usize::from(leaves[li].1 == 1);
        }
        leaf_paths.push(hit.iter().map(|&li| leaves[li].0.clone()).collect());
    }
    let n_trees = model.n_trees();
    let labels = ones.iter().map(|&o| u8::from(2 * o > n_trees)).collect();
    let scores = ones.iter().map(|&o| o as f64 / n_trees as f64).collect();
    Ok(FedRfPrediction { labels, scores, leaf_paths })
}
