//! Slow, direct reimplementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use fedmsa_core::cart::TreeNode;
use fedmsa_core::fedsvm::{initial_model, round_config};
use fedmsa_core::svm::{LinearModel, SvmConfig};
use fedmsa_core::{seed, Dataset};
use rand::seq::SliceRandom;

/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)` over all positive/negative pairs.
pub fn auc_pairwise(gt: &[u8], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..gt.len() {
        for j in 0..gt.len() {
            if gt[i] == 1 && gt[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// (acc, pre, f1, mcc) straight from the textbook formulas with the
/// zero-denominator convention 0.
pub fn hand_metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> (f64, f64, f64, f64) {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let acc = div(tp + tn, tp + tn + fp + fn_);
    let pre = div(tp, tp + fp);
    let rec = div(tp, tp + fn_);
    let f1 = div(2.0 * pre * rec, pre + rec);
    let mcc = div(tp * tn - fp * fn_, ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt());
    (acc, pre, f1, mcc)
}

/// Counts of `(history, next)` pairs keyed by the history tuple.
pub fn ngram_counts(seq: &[usize], order: usize) -> HashMap<Vec<usize>, HashMap<usize, u64>> {
    let mut out: HashMap<Vec<usize>, HashMap<usize, u64>> = HashMap::new();
    for i in order..seq.len() {
        *out.entry(seq[i - order..i].to_vec()).or_default().entry(seq[i]).or_default() += 1;
    }
    out
}

/// All histories of length `order` over `m` states, oldest state first, in
/// lexicographic order.
pub fn histories(m: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        out = out.into_iter().flat_map(|h| (0..m).map(move |s| [h.clone(), vec![s]].concat())).collect();
    }
    out
}

/// Student-t CDF by quadrature. With `x = √ν·tan θ` the density becomes
/// `cos^(ν−1) θ` on `(−π/2, π/2)`, which is smooth, so composite Simpson
/// converges fast; the normalizing constant is integrated the same way.
pub fn t_cdf(t: f64, nu: f64) -> f64 {
    let f = |th: f64| th.cos().powf(nu - 1.0);
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    let upper = (t / nu.sqrt()).atan();
    let total = simpson(-half, half, 200_000);
    if upper <= 0.0 {
        simpson(-half, upper, 200_000) / total
    } else {
        1.0 - simpson(upper, half, 200_000) / total
    }
}

/// Exact weighted Gini as an unreduced fraction.
fn split_fraction(left: [u128; 2], right: [u128; 2]) -> (u128, u128) {
    let nl = left[0] + left[1];
    let nr = right[0] + right[1];
    let sl = nl * nl - left[0] * left[0] - left[1] * left[1];
    let sr = nr * nr - right[0] * right[0] - right[1] * right[1];
    // (sl/nl + sr/nr) / n
    (sl * nr + sr * nl, nl * nr * (nl + nr))
}

fn less(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 < b.0 * a.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteSplit {
    pub feature: String,
    pub left_ids: BTreeSet<u64>,
    pub gini: (u128, u128),
}

/// Every (feature, cut between consecutive distinct values) pair; keeps the
/// lowest impurity, then lowest feature name, then lowest cut. Splits that do
/// not beat the parent or leave a side under `min_leaf` are skipped.
pub fn exhaustive_best_split(data: &Dataset, rows: &[usize], features: &[usize], min_leaf: usize) -> Option<BruteSplit> {
    let mut parent = [0u128; 2];
    for &r in rows {
        parent[data.labels()[r] as usize] += 1;
    }
    let n = parent[0] + parent[1];
    let parent_gini = (n * n - parent[0] * parent[0] - parent[1] * parent[1], n * n);
    let mut best: Option<(BruteSplit, f64)> = None;
    for &col in features {
        let mut values: Vec<f64> = rows.iter().map(|&r| data.value(r, col)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for cut in values.windows(2).map(|w| w[0]) {
            let mut left = [0u128; 2];
            let mut ids = BTreeSet::new();
            for &r in rows {
                if data.value(r, col) <= cut {
                    left[data.labels()[r] as usize] += 1;
                    ids.insert(data.ids()[r]);
                }
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            let (nl, nr) = (left[0] + left[1], right[0] + right[1]);
            if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                continue;
            }
            let g = split_fraction(left, right);
            if !less(g, parent_gini) {
                continue;
            }
            let name = data.feature_names()[col].clone();
            let better = match &best {
                None => true,
                Some((b, bcut)) => {
                    less(g, b.gini) || (!less(b.gini, g) && (name.as_str(), cut) < (b.feature.as_str(), *bcut))
                }
            };
            if better {
                best = Some((BruteSplit { feature: name, left_ids: ids, gini: g }, cut));
            }
        }
    }
    best.map(|b| b.0)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues and eigenvectors (as columns of `v`).
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut a = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..p).flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                if a[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for row in v.iter_mut() {
                    let (vi, vj) = (row[i], row[j]);
                    row[i] = c * vi - s * vj;
                    row[j] = s * vi + c * vj;
                }
            }
        }
    }
    ((0..p).map(|i| a[i][i]).collect(), v)
}

/// Sample covariance with the n − 1 denominator.
pub fn covariance(data: &Dataset) -> Vec<Vec<f64>> {
    let (n, p) = (data.n_samples(), data.n_features());
    let mean: Vec<f64> = (0..p).map(|j| (0..n).map(|i| data.value(i, j)).sum::<f64>() / n as f64).collect();
    (0..p)
        .map(|a| {
            (0..p)
                .map(|b| (0..n).map(|i| (data.value(i, a) - mean[a]) * (data.value(i, b) - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect()
}

/// Per-sample hinge subgradient steps, written out longhand.
pub fn hand_sgd(init: &LinearModel, data: &Dataset, cfg: &SvmConfig) -> LinearModel {
    let mut w = init.weights.clone();
    let mut b = init.intercept;
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.n_samples()).collect();
    let mut t = 0u64;
    for _ in 0..cfg.epochs_per_call {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.eta0 / (1.0 + t as f64 * cfg.decay);
            let label = data.labels()[i];
            let y = if label == 1 { 1.0 } else { -1.0 };
            let x = data.row(i);
            let score: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
            let decay = 1.0 - eta * cfg.lambda;
            if y * score < 1.0 {
                let g = eta * cfg.c * cfg.class_weights[label as usize] * y;
                for j in 0..w.len() {
                    w[j] = decay * w[j] + g * x[j];
                }
                b += g;
            } else {
                for wj in &mut w {
                    *wj *= decay;
                }
            }
            t += 1;
        }
    }
    LinearModel { weights: w, intercept: b }
}

/// Single-client trajectory: w₁ = SVM(w₀), then wᵣ = ½(wᵣ₋₁ + SVM(wᵣ₋₁)).
pub fn single_client_reference(data: &Dataset, cfg: &SvmConfig, rounds: u64, client_seed: u64) -> Vec<LinearModel> {
    let mut out = Vec::new();
    let mut global = initial_model(client_seed, data.n_features());
    for r in 1..=rounds {
        let local = hand_sgd(&global, data, &round_config(cfg, client_seed, r));
        global = if r == 1 {
            local
        } else {
            LinearModel {
                weights: global.weights.iter().zip(&local.weights).map(|(g, l)| 0.5 * (g + l)).collect(),
                intercept: 0.5 * (global.intercept + local.intercept),
            }
        };
        out.push(global.clone());
    }
    out
}

/// Leaf path of row `row` in a threshold-bearing tree.
pub fn route(tree: &TreeNode, data: &Dataset, row: usize) -> String {
    let mut node = tree;
    let mut path = String::new();
    while let TreeNode::Split { feature, threshold, left, right } = node {
        let col = data.feature_index(feature).expect("feature present");
        if data.value(row, col) <= *threshold {
            path.push('L');
            node = left;
        } else {
            path.push('R');
            node = right;
        }
    }
    path
}
