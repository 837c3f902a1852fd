//! Data preparation, model training and the four research-question sections.

use std::collections::BTreeMap;

use fedmsa_core::cart::build_forest;
use fedmsa_core::dataio::{
    fit_pca, generate_synthetic, impute_missing, load_csv, partition_horizontal, partition_vertical,
    split_feature_groups, stratified_split, CsvSchema, Dataset, HorizontalPartition, PcaOptions, PcaTarget,
};
use fedmsa_core::fedrf::{fedrf_predict, run_fedrf};
use fedmsa_core::fedsvm::run_fedsvm;
use fedmsa_core::markov::{
    build_error_sequence, compare_matrices, fit_error_markov, heterogeneity_from_labels, read_matrix_csv,
    sample_groups, HeterogeneityReport, MatrixComparison, PredictionRow, PredictionTable, TransitionMatrix, Which,
};
use fedmsa_core::metrics::{compare_reports, evaluate, threshold_t_test, Metric, MetricVerdict, MetricsReport, TTestResult};
use fedmsa_core::svm::svm_scores;
use fedmsa_core::transcript::{digest, TranscriptRecord};
use fedmsa_core::Label;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scenario};
use crate::error::{CliError, Result};

/// Labels and continuous scores of one model on the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<Label>,
    pub scores: Vec<f64>,
}

/// Everything the RQ sections need: the test split's ids, times and ground
/// truth plus both models' predictions, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ids: Vec<u64>,
    pub timestamps: Vec<f64>,
    pub gt: Vec<Label>,
    pub cl: Prediction,
    pub fl: Prediction,
}

impl Evaluation {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn subset(&self, rows: &[usize]) -> Evaluation {
        let pick = |p: &Prediction| Prediction {
            labels: rows.iter().map(|&r| p.labels[r]).collect(),
            scores: rows.iter().map(|&r| p.scores[r]).collect(),
        };
        Evaluation {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            gt: rows.iter().map(|&r| self.gt[r]).collect(),
            cl: pick(&self.cl),
            fl: pick(&self.fl),
        }
    }

    /// Rows stable-sorted by timestamp.
    fn time_sorted(mut self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.timestamps[a].total_cmp(&self.timestamps[b]));
        if order.iter().enumerate().any(|(i, &r)| i != r) {
            self = self.subset(&order);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub train_class_counts: [usize; 2],
    pub test_class_counts: [usize; 2],
    pub n_clients: usize,
    pub client_shapes: Vec<(usize, usize)>,
}

/// Prepared data, trained models and their test predictions.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub run_id: String,
    pub summary: DataSummary,
    pub warnings: Vec<String>,
    pub evaluation: Evaluation,
    pub transcript: Vec<TranscriptRecord>,
}

/// The config as recorded in reports: the output directory is not part of
/// an experiment's identity.
pub fn canonical(cfg: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { out_dir: ExperimentConfig::default().out_dir, ..cfg.clone() }
}

pub fn run_id(cfg: &ExperimentConfig) -> Result<String> {
    Ok(digest(&serde_json::to_value(canonical(cfg))?)[..16].to_string())
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, String)> {
    match &cfg.data_csv {
        Some(path) => Ok((load_csv(path, &CsvSchema::default())?, path.display().to_string())),
        None => Ok((generate_synthetic(&cfg.synthetic_spec())?, "synthetic".to_string())),
    }
}

/// Imputes, splits and (optionally) projects the data. PCA is fitted on
/// the training split only.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset, String, Vec<String>)> {
    let (mut data, source) = load_data(cfg)?;
    let mut warnings = Vec::new();
    if data.has_missing() {
        let (filled, w) = impute_missing(&data, cfg.impute)?;
        warnings.extend(w.into_iter().map(|w| format!("feature `{}` has no observed values; filled with 0", w.feature)));
        data = filled;
    }
    let (mut train, mut test) = stratified_split(&data, cfg.train_fraction, cfg.split_seed)?;
    if cfg.pca_components > 0 {
        let opts = PcaOptions { target: PcaTarget::Components(cfg.pca_components), standardize: cfg.pca_standardize };
        let model = fit_pca(&train, opts)?;
        train = model.transform(&train)?;
        test = model.transform(&test)?;
    }
    Ok((train, test, source, warnings))
}

fn feature_groups(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<Vec<String>>> {
    match &cfg.feature_groups {
        Some(g) => {
            if g.len() != cfg.n_clients {
                return Err(CliError::Config(format!("{} feature groups for {} clients", g.len(), cfg.n_clients)));
            }
            Ok(g.clone())
        }
        None => Ok(split_feature_groups(train.feature_names(), cfg.n_clients)?),
    }
}

fn svm_prediction(model: &fedmsa_core::LinearModel, test: &Dataset) -> Result<Prediction> {
    let scores = svm_scores(model, test)?;
    let labels = scores.iter().map(|&s| u8::from(s > 0.0)).collect();
    Ok(Prediction { labels, scores })
}

impl Experiment {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let run_id = run_id(cfg)?;
        let (train, test, source, warnings) = prepare_data(cfg)?;
        let mut transcript = Vec::new();
        let (cl, fl, client_shapes) = match cfg.scenario {
            Scenario::Hfl => {
                let svm = cfg.svm_config();
                let opts = cfg.fedsvm_options();
                // the centralized baseline is the same schedule on a single client
                let single = HorizontalPartition { clients: vec![train.clone()] };
                let cl = run_fedsvm(&single, &svm, &opts)?;
                let partition = partition_horizontal(&train, cfg.n_clients, cfg.partition_seed, cfg.stratified)?;
                let fl = run_fedsvm(&partition, &svm, &opts)?;
                transcript.extend(fl.transcript.iter().map(|m| m.to_record(&run_id, cfg.log_payloads)));
                let shapes = partition.clients.iter().map(|c| (c.n_samples(), c.n_features())).collect();
                (svm_prediction(&cl.global, &test)?, svm_prediction(&fl.global, &test)?, shapes)
            }
            Scenario::Vfl => {
                let forest_cfg = cfg.forest_config();
                let groups = feature_groups(cfg, &train)?;
                let cl_forest = build_forest(&train, &forest_cfg)?;
                let (labels, scores) = cl_forest.predict_dataset(&test)?;
                let partition = partition_vertical(&train, &groups)?;
                let fl = run_fedrf(&partition, &forest_cfg)?;
                transcript.extend(fl.records(&run_id, cfg.log_payloads));
                let pred = fedrf_predict(&fl, &partition_vertical(&test, &groups)?)?;
                let shapes = partition.clients.iter().map(|c| (c.n_samples(), c.n_features())).collect();
                (Prediction { labels, scores }, Prediction { labels: pred.labels, scores: pred.scores }, shapes)
            }
        };
        let summary = DataSummary {
            source,
            n_train: train.n_samples(),
            n_test: test.n_samples(),
            n_features: train.n_features(),
            feature_names: train.feature_names().to_vec(),
            train_class_counts: train.class_counts(),
            test_class_counts: test.class_counts(),
            n_clients: cfg.n_clients,
            client_shapes,
        };
        let evaluation = Evaluation {
            ids: test.ids().to_vec(),
            timestamps: test.timestamps().to_vec(),
            gt: test.labels().to_vec(),
            cl,
            fl,
        }
        .time_sorted();
        Ok(Self { cfg: cfg.clone(), run_id, summary, warnings, evaluation, transcript })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq1Section {
    pub cl: MetricsReport,
    pub fl: MetricsReport,
    pub verdicts: Vec<MetricVerdict>,
    pub within: bool,
    pub failing: Vec<String>,
}

fn failing(verdicts: &[MetricVerdict]) -> Vec<String> {
    verdicts.iter().filter(|v| v.within == Some(false)).map(|v| v.metric.name().to_string()).collect()
}

pub fn run_rq1(cfg: &ExperimentConfig, ev: &Evaluation) -> Result<Rq1Section> {
    let groups = (ev.len() >= cfg.stability_groups).then_some(cfg.stability_groups);
    let cl = evaluate(&ev.gt, &ev.cl.labels, &ev.cl.scores, &ev.timestamps, groups)?;
    let fl = evaluate(&ev.gt, &ev.fl.labels, &ev.fl.scores, &ev.timestamps, groups)?;
    let verdicts = compare_reports(&cl, &fl, &cfg.deltas())?;
    let failing = failing(&verdicts);
    Ok(Rq1Section { cl, fl, within: failing.is_empty(), verdicts, failing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub start: usize,
    pub len: usize,
    pub cl: MetricsReport,
    pub fl: MetricsReport,
    pub verdicts: Vec<MetricVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub delta: f64,
    /// `|CL − FL|` per group; absent where the metric is undefined.
    pub diffs: Vec<Option<f64>>,
    pub n_defined: usize,
    pub n_within: usize,
    pub required: usize,
    pub within: bool,
    pub histogram: Vec<HistogramBin>,
    pub t_test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq2Section {
    pub groups: Vec<GroupResult>,
    pub metrics: Vec<MetricSummary>,
    pub within: bool,
    pub failing: Vec<String>,
}

pub const HISTOGRAM_WIDTH: f64 = 0.05;

fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let n_bins = ((max / HISTOGRAM_WIDTH).floor() as usize) + 1;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        counts[((v / HISTOGRAM_WIDTH).floor() as usize).min(n_bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { lo: i as f64 * HISTOGRAM_WIDTH, hi: (i + 1) as f64 * HISTOGRAM_WIDTH, count })
        .collect()
}

pub fn run_rq2(cfg: &ExperimentConfig, ev: &Evaluation) -> Result<Rq2Section> {
    let ranges = sample_groups(ev.len(), cfg.rq2_groups, (cfg.rq2_len_min, cfg.rq2_len_max), cfg.rq2_seed)?;
    let deltas = cfg.deltas();
    let mut groups = Vec::with_capacity(ranges.len());
    for r in &ranges {
        let rows: Vec<usize> = r.clone().collect();
        let g = ev.subset(&rows);
        let sg = (g.len() >= cfg.stability_groups).then_some(cfg.stability_groups);
        let cl = evaluate(&g.gt, &g.cl.labels, &g.cl.scores, &g.timestamps, sg)?;
        let fl = evaluate(&g.gt, &g.fl.labels, &g.fl.scores, &g.timestamps, sg)?;
        let verdicts = compare_reports(&cl, &fl, &deltas)?;
        groups.push(GroupResult { start: r.start, len: r.len(), cl, fl, verdicts });
    }
    let required = (cfg.rq2_min_within * groups.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let metrics: Vec<MetricSummary> = Metric::ALL
        .iter()
        .filter(|m| groups.first().is_some_and(|g| g.verdicts.iter().any(|v| v.metric == **m)))
        .map(|&m| {
            let diffs: Vec<Option<f64>> = groups
                .iter()
                .map(|g| g.verdicts.iter().find(|v| v.metric == m).and_then(|v| v.diff))
                .collect();
            let defined: Vec<f64> = diffs.iter().flatten().copied().collect();
            let delta = deltas.for_metric(m);
            let n_within = defined.iter().filter(|&&d| d < delta).count();
            let t_test = if defined.len() >= 2 { threshold_t_test(&defined, delta, cfg.alpha).ok() } else { None };
            MetricSummary {
                metric: m,
                delta,
                n_defined: defined.len(),
                n_within,
                required,
                within: n_within >= required,
                histogram: histogram(&defined),
                diffs,
                t_test,
            }
        })
        .collect();
    let failing: Vec<String> = metrics.iter().filter(|m| !m.within).map(|m| m.metric.name().to_string()).collect();
    Ok(Rq2Section { groups, metrics, within: failing.is_empty(), failing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq3Section {
    pub source: String,
    pub fl: TransitionMatrix,
    pub cl: TransitionMatrix,
    pub comparison: MatrixComparison,
    pub within: bool,
}

pub fn run_rq3(cfg: &ExperimentConfig, ev: &Evaluation) -> Result<Rq3Section> {
    let (fl, cl, source) = match (&cfg.rq3_fixture_fl, &cfg.rq3_fixture_cl) {
        (Some(f), Some(c)) => {
            let read = |p: &std::path::Path| -> Result<TransitionMatrix> {
                let file = std::fs::File::open(p).map_err(|e| CliError::io(p, e))?;
                Ok(read_matrix_csv(file)?)
            };
            (read(f)?, read(c)?, format!("fixtures: {} / {}", f.display(), c.display()))
        }
        _ => {
            let rows = (0..ev.len())
                .map(|i| PredictionRow {
                    id: ev.ids[i],
                    timestamp: ev.timestamps[i],
                    gt: ev.gt[i],
                    pred_cl: ev.cl.labels[i],
                    pred_fl: ev.fl.labels[i],
                })
                .collect();
            let table = PredictionTable::new(rows)?;
            let fl = fit_error_markov(&build_error_sequence(&table, Which::Fl), cfg.rq3_order)?;
            let cl = fit_error_markov(&build_error_sequence(&table, Which::Cl), cfg.rq3_order)?;
            (fl, cl, "predictions".to_string())
        }
    };
    let comparison = compare_matrices(&fl, &cl, cfg.delta_matrix)?;
    Ok(Rq3Section { source, within: comparison.within, fl, cl, comparison })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heterogeneity {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rq4Section {
    pub reports: Vec<HeterogeneityReport>,
    pub heterogeneity: Heterogeneity,
}

/// Heterogeneity of the test split's ground-truth label process.
pub fn run_rq4(cfg: &ExperimentConfig, ev: &Evaluation) -> Result<Rq4Section> {
    let labels: Vec<usize> = ev.gt.iter().map(|&g| g as usize).collect();
    let reports = heterogeneity_from_labels(&labels, &cfg.heterogeneity_config())?;
    let strong = reports.iter().any(|r| r.n_clusters >= 2);
    Ok(Rq4Section { reports, heterogeneity: if strong { Heterogeneity::Strong } else { Heterogeneity::Weak } })
}

/// Combined verdict over the enabled sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `Y`/`N` answer per enabled RQ1–RQ3 section.
    pub answers: BTreeMap<String, bool>,
    pub failing: Vec<String>,
    pub all_within: bool,
    pub heterogeneity: Option<Heterogeneity>,
    pub conclusion: Option<String>,
}

pub fn conclusion(heterogeneity: Heterogeneity, all_yes: bool) -> &'static str {
    match (heterogeneity, all_yes) {
        (Heterogeneity::Strong, true) => {
            "strong heterogeneity and every answer is Y: the conclusion is strengthened; FL and CL give similar predictions and can replace each other"
        }
        (Heterogeneity::Strong, false) => {
            "strong heterogeneity and some answer is N: data heterogeneity may be one of the reasons disturbing the conclusion"
        }
        (Heterogeneity::Weak, true) => {
            "weak heterogeneity and every answer is Y: FL can replace CL under the premise of data homogeneity"
        }
        (Heterogeneity::Weak, false) => {
            "weak heterogeneity and some answer is N: FL cannot replace CL even with homogeneous data"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub warnings: Vec<String>,
    pub rq1: Option<Rq1Section>,
    pub rq2: Option<Rq2Section>,
    pub rq3: Option<Rq3Section>,
    pub rq4: Option<Rq4Section>,
    pub verdict: Verdict,
}

/// Runs every enabled section on an evaluation and assembles the verdict.
pub fn assemble_report(
    cfg: &ExperimentConfig,
    run_id: String,
    data: DataSummary,
    warnings: Vec<String>,
    ev: &Evaluation,
) -> Result<RunReport> {
    cfg.validate()?;
    let (rq1, rq2, rq3, rq4) = std::thread::scope(|s| {
        let rq2 = s.spawn(|| cfg.rq2.then(|| run_rq2(cfg, ev)).transpose());
        let rq4 = s.spawn(|| cfg.rq4.then(|| run_rq4(cfg, ev)).transpose());
        let rq1 = cfg.rq1.then(|| run_rq1(cfg, ev)).transpose();
        let rq3 = cfg.rq3.then(|| run_rq3(cfg, ev)).transpose();
        (rq1, rq2.join().expect("rq2 thread"), rq3, rq4.join().expect("rq4 thread"))
    });
    let (rq1, rq2, rq3, rq4) = (rq1?, rq2?, rq3?, rq4?);

    let mut answers = BTreeMap::new();
    let mut failing = Vec::new();
    if let Some(s) = &rq1 {
        answers.insert("rq1".to_string(), s.within);
        failing.extend(s.failing.iter().map(|m| format!("rq1:{m}")));
    }
    if let Some(s) = &rq2 {
        answers.insert("rq2".to_string(), s.within);
        failing.extend(s.failing.iter().map(|m| format!("rq2:{m}")));
    }
    if let Some(s) = &rq3 {
        answers.insert("rq3".to_string(), s.within);
        if !s.within {
            failing.push(format!("rq3:max_diff={}", s.comparison.max_diff));
        }
    }
    let all_within = failing.is_empty();
    let heterogeneity = rq4.as_ref().map(|s| s.heterogeneity);
    let conclusion = heterogeneity.filter(|_| !answers.is_empty()).map(|h| conclusion(h, all_within).to_string());
    Ok(RunReport {
        run_id,
        scenario: cfg.scenario,
        config: canonical(cfg),
        data,
        warnings,
        rq1,
        rq2,
        rq3,
        rq4,
        verdict: Verdict { answers, failing, all_within, heterogeneity, conclusion },
    })
}

impl Experiment {
    pub fn report(&self) -> Result<RunReport> {
        assemble_report(&self.cfg, self.run_id.clone(), self.summary.clone(), self.warnings.clone(), &self.evaluation)
    }
}
