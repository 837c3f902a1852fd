//! Markov models of state sequences: prediction-error models (hit / miss /
//! mistake) for comparing two classifiers, and ground-truth label models for
//! heterogeneity analysis.

mod dbscan;
mod heterogeneity;

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{seed, Label};

pub use dbscan::{angular_distance_deg, dbscan, silhouette, ClusterLabel};
pub use heterogeneity::{
    heterogeneity, heterogeneity_from_labels, heterogeneity_from_sequences, label_sequence, GroupDescriptor, HeterogeneityConfig, HeterogeneityReport,
};

/// Prediction-error state of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorState {
    /// Prediction equals ground truth.
    Hit,
    /// Faulty sample predicted qualified.
    Miss,
    /// Qualified sample predicted faulty.
    Mistake,
}

impl ErrorState {
    pub const ALPHABET: [&'static str; 3] = ["hit", "miss", "mistake"];

    pub fn classify(gt: Label, pred: Label) -> Self {
        match (gt, pred) {
            (1, 0) => ErrorState::Miss,
            (0, 1) => ErrorState::Mistake,
            _ => ErrorState::Hit,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const LABEL_ALPHABET: [&str; 2] = ["S0", "S1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: u64,
    pub timestamp: f64,
    pub gt: Label,
    pub pred_cl: Label,
    pub pred_fl: Label,
}

/// Per-sample predictions of a centralized and a federated model, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    rows: Vec<PredictionRow>,
}

impl PredictionTable {
    /// Stable-sorts rows by timestamp; ids must be unique.
    pub fn new(mut rows: Vec<PredictionRow>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for r in &rows {
            if !seen.insert(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
        }
        rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Cl,
    Fl,
}

pub fn build_error_sequence(table: &PredictionTable, which: Which) -> Vec<ErrorState> {
    table
        .rows()
        .iter()
        .map(|r| {
            let pred = match which {
                Which::Cl => r.pred_cl,
                Which::Fl => r.pred_fl,
            };
            ErrorState::classify(r.gt, pred)
        })
        .collect()
}

/// Order-k transition matrix. Row `r` encodes the history
/// `(s₁, …, s_k)` as `Σ sᵢ · m^(k−i)` (oldest state most significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub order: usize,
    pub alphabet: Vec<String>,
    pub probs: Vec<Vec<f64>>,
    /// Absent for matrices built from published probabilities.
    pub counts: Option<Vec<Vec<u64>>>,
    /// Rows whose history never occurred and were set to uniform.
    pub uniform_rows: Vec<bool>,
}

impl TransitionMatrix {
    pub fn n_states(&self) -> usize {
        self.alphabet.len()
    }

    pub fn n_rows(&self) -> usize {
        self.probs.len()
    }

    /// Builds a matrix from given probabilities, checking shape and row sums.
    pub fn from_probabilities(alphabet: Vec<String>, order: usize, probs: Vec<Vec<f64>>) -> Result<Self> {
        let m = alphabet.len();
        if order == 0 || m == 0 {
            return Err(Error::Contract("order and alphabet size must be positive".into()));
        }
        if probs.len() != m.pow(order as u32) || probs.iter().any(|r| r.len() != m) {
            return Err(Error::Contract(format!("expected {}x{m} probabilities", m.pow(order as u32))));
        }
        for (i, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| p.is_nan() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("row {i} is not a probability distribution (sum {sum})")));
            }
        }
        let rows = probs.len();
        Ok(Self { order, alphabet, probs, counts: None, uniform_rows: vec![false; rows] })
    }

    /// Row-major flattening of the probabilities.
    pub fn flatten(&self) -> Vec<f64> {
        self.probs.iter().flatten().copied().collect()
    }

    pub fn row_label(&self, row: usize) -> String {
        let m = self.n_states();
        let mut parts = vec![String::new(); self.order];
        let mut r = row;
        for slot in parts.iter_mut().rev() {
            *slot = self.alphabet[r % m].clone();
            r /= m;
        }
        parts.join(">")
    }
}

/// Maximum-likelihood order-k fit by counting (k+1)-grams.
pub fn fit_markov(seq: &[usize], alphabet: &[&str], order: usize) -> Result<TransitionMatrix> {
    let m = alphabet.len();
    if order == 0 || m == 0 {
        return Err(Error::Contract("order and alphabet size must be positive".into()));
    }
    if seq.len() < order + 1 {
        return Err(Error::Contract(format!("sequence of length {} too short for order {order}", seq.len())));
    }
    if let Some(s) = seq.iter().find(|&&s| s >= m) {
        return Err(Error::Contract(format!("state {s} outside alphabet of size {m}")));
    }
    let rows = m.pow(order as u32);
    let mut counts = vec![vec![0u64; m]; rows];
    for window in seq.windows(order + 1) {
        let hist = window[..order].iter().fold(0usize, |acc, &s| acc * m + s);
        counts[hist][window[order]] += 1;
    }
    let mut uniform_rows = vec![false; rows];
    let probs = counts
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                uniform_rows[r] = true;
                vec![1.0 / m as f64; m]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TransitionMatrix {
        order,
        alphabet: alphabet.iter().map(|s| s.to_string()).collect(),
        probs,
        counts: Some(counts),
        uniform_rows,
    })
}

pub fn fit_error_markov(seq: &[ErrorState], order: usize) -> Result<TransitionMatrix> {
    let idx: Vec<usize> = seq.iter().map(|s| s.index()).collect();
    fit_markov(&idx, &ErrorState::ALPHABET, order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixComparison {
    pub diffs: Vec<Vec<f64>>,
    pub mean_diff: f64,
    pub max_diff: f64,
    pub delta: f64,
    pub within: bool,
    /// Rows flagged uniform in both matrices, left out of mean/max.
    pub excluded_rows: Vec<usize>,
}

/// Elementwise `|a − b|` with mean, max and the verdict `max ≤ δ`.
pub fn compare_matrices(a: &TransitionMatrix, b: &TransitionMatrix, delta: f64) -> Result<MatrixComparison> {
    if a.order != b.order || a.alphabet != b.alphabet || a.n_rows() != b.n_rows() {
        return Err(Error::Contract("matrices differ in order or alphabet".into()));
    }
    let diffs: Vec<Vec<f64>> = a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).collect())
        .collect();
    let excluded_rows: Vec<usize> = (0..a.n_rows()).filter(|&r| a.uniform_rows[r] && b.uniform_rows[r]).collect();
    let used: Vec<f64> = diffs
        .iter()
        .enumerate()
        .filter(|(r, _)| !excluded_rows.contains(r))
        .flat_map(|(_, row)| row.iter().copied())
        .collect();
    let (mean_diff, max_diff) = if used.is_empty() {
        (0.0, 0.0)
    } else {
        (used.iter().sum::<f64>() / used.len() as f64, used.iter().copied().fold(0.0, f64::max))
    };
    Ok(MatrixComparison { diffs, mean_diff, max_diff, delta, within: max_diff <= delta, excluded_rows })
}

/// Reads a matrix from CSV with header `state,<s1>,…,<sm>` and one row per
/// history. The order is inferred from the row count; `#` lines are comments.
pub fn read_matrix_csv<R: std::io::Read>(reader: R) -> Result<TransitionMatrix> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if header.len() < 2 || &header[0] != "state" {
        return Err(Error::Parse { line: 1, msg: "expected header `state,<states…>`".into() });
    }
    let alphabet: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut probs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), msg: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != alphabet.len() + 1 {
            return Err(Error::Parse { line, msg: format!("expected {} cells", alphabet.len() + 1) });
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("`{c}`: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        probs.push(row);
    }
    let m = alphabet.len();
    let mut order = 1;
    while m.pow(order as u32) < probs.len() {
        order += 1;
    }
    TransitionMatrix::from_probabilities(alphabet, order, probs)
}

pub fn write_matrix_csv<W: std::io::Write>(matrix: &TransitionMatrix, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["state".to_string()];
    header.extend(matrix.alphabet.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (r, row) in matrix.probs.iter().enumerate() {
        let mut rec = vec![matrix.row_label(r)];
        rec.extend(row.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `n_groups` random windows of consecutive positions: length uniform in
/// `[lo, hi]`, start uniform in `[0, n − L]`. Windows may overlap.
pub fn sample_groups(n: usize, n_groups: usize, len_range: (usize, usize), seed: u64) -> Result<Vec<Range<usize>>> {
    let (lo, hi) = len_range;
    if lo < 2 || lo > hi {
        return Err(Error::Contract(format!("invalid group length range [{lo}, {hi}]")));
    }
    if hi > n {
        return Err(Error::Contract(format!("group length up to {hi} exceeds {n} samples")));
    }
    let mut rng = seed::rng(seed);
    Ok((0..n_groups)
        .map(|_| {
            let len = rng.random_range(lo..=hi);
            let start = rng.random_range(0..=n - len);
            start..start + len
        })
        .collect())
}
