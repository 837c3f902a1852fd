//! Classification measurements (ACC, PRE, F1, MCC, AUC, stability), the
//! δ-threshold comparison of two reports, and the one-sided t test of
//! "difference < δ".

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn confusion(gt: &[Label], pred: &[Label]) -> Result<ConfusionCounts> {
    if gt.len() != pred.len() {
        return Err(Error::Contract(format!("{} ground-truth labels vs {} predictions", gt.len(), pred.len())));
    }
    if gt.is_empty() {
        return Err(Error::Contract("confusion of empty label vectors".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&g, &p) in gt.iter().zip(pred) {
        match (g == 1, p == 1) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

pub fn acc(c: &ConfusionCounts) -> f64 {
    ratio(c.tp + c.tn, c.total())
}

/// Precision; 0 when nothing was predicted positive.
pub fn pre(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

/// True when precision fell back to the zero convention.
pub fn pre_undefined(c: &ConfusionCounts) -> bool {
    c.tp + c.fp == 0
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// `2TP / (2TP + FP + FN)`, 0 when the denominator is 0.
pub fn f1(c: &ConfusionCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den }
}

/// Area under the ROC curve: `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, computed from
/// mid-ranks in O(n log n).
pub fn auc(gt: &[Label], scores: &[f64]) -> Result<f64> {
    if gt.len() != scores.len() {
        return Err(Error::Contract(format!("{} labels vs {} scores", gt.len(), scores.len())));
    }
    let n_pos = gt.iter().filter(|&&g| g == 1).count();
    let n_neg = gt.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both classes in the ground truth".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (doubled) mid-ranks of the positives, kept integral
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled mid-rank = i + j + 2
        let mid2 = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| gt[k] == 1).count() as u128;
        pos_rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let p = n_pos as u128;
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Accuracy per time group and its population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub series: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub variance: f64,
}

/// Stable-sorts by timestamp, cuts into `n_groups` contiguous groups (sizes
/// differ by at most one, earlier groups larger) and scores each group.
pub fn stability(gt: &[Label], pred: &[Label], timestamps: &[f64], n_groups: usize) -> Result<Stability> {
    let n = gt.len();
    if pred.len() != n || timestamps.len() != n {
        return Err(Error::Contract("stability inputs differ in length".into()));
    }
    if n_groups == 0 || n < n_groups {
        return Err(Error::Contract(format!("{n} samples cannot form {n_groups} groups")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| timestamps[a].total_cmp(&timestamps[b]));
    let base = n / n_groups;
    let extra = n % n_groups;
    let mut series = Vec::with_capacity(n_groups);
    let mut group_sizes = Vec::with_capacity(n_groups);
    let mut start = 0;
    for g in 0..n_groups {
        let len = base + usize::from(g < extra);
        let hits = order[start..start + len].iter().filter(|&&i| gt[i] == pred[i]).count();
        series.push(hits as f64 / len as f64);
        group_sizes.push(len);
        start += len;
    }
    let mean = series.iter().sum::<f64>() / n_groups as f64;
    let variance = series.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n_groups as f64;
    Ok(Stability { series, group_sizes, variance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionCounts,
    pub acc: f64,
    pub pre: f64,
    pub f1: f64,
    /// Absent when the ground truth holds a single class.
    pub mcc: Option<f64>,
    /// Absent when the ground truth holds a single class.
    pub auc: Option<f64>,
    pub stability_series: Vec<f64>,
    pub stability_var: f64,
    pub precision_undefined: bool,
}

/// Full report for one model on one labelled sample set. Stability uses
/// `n_groups` time groups, or is skipped (empty series) when `None`.
pub fn evaluate(
    gt: &[Label],
    pred: &[Label],
    scores: &[f64],
    timestamps: &[f64],
    n_groups: Option<usize>,
) -> Result<MetricsReport> {
    let c = confusion(gt, pred)?;
    let both_classes = c.positives() > 0 && c.negatives() > 0;
    let (series, var) = match n_groups {
        Some(g) => {
            let s = stability(gt, pred, timestamps, g)?;
            (s.series, s.variance)
        }
        None => (Vec::new(), 0.0),
    };
    Ok(MetricsReport {
        confusion: c,
        acc: acc(&c),
        pre: pre(&c),
        f1: f1(&c),
        mcc: both_classes.then(|| mcc(&c)),
        auc: if both_classes { Some(auc(gt, scores)?) } else { None },
        stability_series: series,
        stability_var: var,
        precision_undefined: pre_undefined(&c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Acc,
    Pre,
    F1,
    Mcc,
    Auc,
    StabilityVar,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Acc, Metric::Pre, Metric::F1, Metric::Mcc, Metric::Auc, Metric::StabilityVar];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Acc => "ACC",
            Metric::Pre => "PRE",
            Metric::F1 => "F1",
            Metric::Mcc => "MCC",
            Metric::Auc => "AUC",
            Metric::StabilityVar => "Stab(Var)",
        }
    }

    pub fn of(&self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::Acc => Some(r.acc),
            Metric::Pre => Some(r.pre),
            Metric::F1 => Some(r.f1),
            Metric::Mcc => r.mcc,
            Metric::Auc => r.auc,
            Metric::StabilityVar => (!r.stability_series.is_empty()).then_some(r.stability_var),
        }
    }
}

/// Equivalence margins per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub default: f64,
    pub mcc_auc: f64,
}

impl Deltas {
    pub fn uniform(delta: f64) -> Self {
        Self { default: delta, mcc_auc: delta }
    }

    pub fn for_metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Mcc | Metric::Auc => self.mcc_auc,
            _ => self.default,
        }
    }
}

impl Default for Deltas {
    fn default() -> Self {
        Self { default: 0.1, mcc_auc: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVerdict {
    pub metric: Metric,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// `|a − b|`, absent when either side is absent.
    pub diff: Option<f64>,
    pub delta: f64,
    pub within: Option<bool>,
}

pub fn compare_reports(a: &MetricsReport, b: &MetricsReport, deltas: &Deltas) -> Result<Vec<MetricVerdict>> {
    if !(deltas.default > 0.0 && deltas.mcc_auc > 0.0) {
        return Err(Error::Config("δ must be positive".into()));
    }
    Ok(Metric::ALL
        .iter()
        .filter(|m| **m != Metric::StabilityVar || !(a.stability_series.is_empty() && b.stability_series.is_empty()))
        .map(|&m| {
            let (va, vb) = (m.of(a), m.of(b));
            let diff = va.zip(vb).map(|(x, y)| (x - y).abs());
            let delta = deltas.for_metric(m);
            MetricVerdict { metric: m, a: va, b: vb, diff, delta, within: diff.map(|d| d < delta) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_h0: bool,
    pub mean: f64,
    pub std_dev: f64,
    /// Zero sample variance: no t statistic; verdict is `mean < δ`.
    pub degenerate: bool,
}

/// One-sample, lower-tailed t test of H0 "mean difference ≥ δ" against
/// H1 "mean difference < δ".
pub fn threshold_t_test(differences: &[f64], delta: f64, alpha: f64) -> Result<TTestResult> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::Contract("t test needs at least two differences".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} outside (0,1)")));
    }
    let mean = differences.iter().sum::<f64>() / n as f64;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        let below = mean < delta;
        return Ok(TTestResult {
            statistic: if below { f64::NEG_INFINITY } else if mean > delta { f64::INFINITY } else { 0.0 },
            p_value: if below { 0.0 } else { 1.0 },
            reject_h0: below,
            mean,
            std_dev: 0.0,
            degenerate: true,
        });
    }
    let statistic = (mean - delta) / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Metric(e.to_string()))?;
    let p_value = dist.cdf(statistic);
    Ok(TTestResult { statistic, p_value, reject_h0: p_value < alpha, mean, std_dev: sd, degenerate: false })
}
