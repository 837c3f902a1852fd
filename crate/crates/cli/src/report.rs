//! Output files of a run and recomputation from stored predictions.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use fedmsa_core::markov::ClusterLabel;
use fedmsa_core::transcript::{digest, read_jsonl, write_jsonl, TranscriptRecord};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{assemble_report, DataSummary, Evaluation, Prediction, RunReport};

pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

/// Wall-clock facts kept apart from the deterministic report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub run_id: String,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    pub command: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_predictions(path: &Path, ev: &Evaluation) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "timestamp", "gt", "pred_cl", "score_cl", "pred_fl", "score_fl"])?;
    for i in 0..ev.len() {
        w.write_record([
            ev.ids[i].to_string(),
            ev.timestamps[i].to_string(),
            ev.gt[i].to_string(),
            ev.cl.labels[i].to_string(),
            ev.cl.scores[i].to_string(),
            ev.fl.labels[i].to_string(),
            ev.fl.scores[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Deserialize)]
struct PredictionCsvRow {
    id: u64,
    timestamp: f64,
    gt: u8,
    pred_cl: u8,
    score_cl: f64,
    pred_fl: u8,
    score_fl: f64,
}

pub fn read_predictions(path: &Path) -> Result<Evaluation> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut ev = Evaluation {
        ids: Vec::new(),
        timestamps: Vec::new(),
        gt: Vec::new(),
        cl: Prediction { labels: Vec::new(), scores: Vec::new() },
        fl: Prediction { labels: Vec::new(), scores: Vec::new() },
    };
    for row in csv::Reader::from_reader(BufReader::new(file)).deserialize() {
        let r: PredictionCsvRow = row?;
        if r.gt > 1 || r.pred_cl > 1 || r.pred_fl > 1 {
            return Err(CliError::Config(format!("{}: label outside {{0,1}} for id {}", path.display(), r.id)));
        }
        ev.ids.push(r.id);
        ev.timestamps.push(r.timestamp);
        ev.gt.push(r.gt);
        ev.cl.labels.push(r.pred_cl);
        ev.cl.scores.push(r.score_cl);
        ev.fl.labels.push(r.pred_fl);
        ev.fl.scores.push(r.score_fl);
    }
    Ok(ev)
}

fn write_section_csvs(dir: &Path, report: &RunReport) -> Result<()> {
    if let Some(rq1) = &report.rq1 {
        let path = dir.join("rq1_metrics.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["metric", "cl", "fl", "diff", "delta", "within"])?;
        for v in &rq1.verdicts {
            w.write_record([v.metric.name().to_string(), opt(v.a), opt(v.b), opt(v.diff), v.delta.to_string(), opt_bool(v.within)])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;

        let path = dir.join("rq1_stability.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["group", "cl", "fl", "diff"])?;
        for (g, (a, b)) in rq1.cl.stability_series.iter().zip(&rq1.fl.stability_series).enumerate() {
            w.write_record([g.to_string(), a.to_string(), b.to_string(), (a - b).abs().to_string()])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    if let Some(rq2) = &report.rq2 {
        let path = dir.join("rq2_groups.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["group", "start", "len", "metric", "cl", "fl", "diff", "delta", "within"])?;
        for (g, group) in rq2.groups.iter().enumerate() {
            for v in &group.verdicts {
                w.write_record([
                    g.to_string(),
                    group.start.to_string(),
                    group.len.to_string(),
                    v.metric.name().to_string(),
                    opt(v.a),
                    opt(v.b),
                    opt(v.diff),
                    v.delta.to_string(),
                    opt_bool(v.within),
                ])?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;

        let path = dir.join("rq2_histogram.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["metric", "lo", "hi", "count"])?;
        for m in &rq2.metrics {
            for b in &m.histogram {
                w.write_record([m.metric.name().to_string(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    if let Some(rq3) = &report.rq3 {
        let path = dir.join("rq3_matrices.csv");
        let mut w = csv_writer(&path)?;
        let mut header = vec!["matrix".to_string(), "state".to_string()];
        header.extend(rq3.fl.alphabet.iter().cloned());
        w.write_record(&header)?;
        let rows = [("fl", &rq3.fl.probs), ("cl", &rq3.cl.probs), ("diff", &rq3.comparison.diffs)];
        for (name, probs) in rows {
            for (r, row) in probs.iter().enumerate() {
                let mut rec = vec![name.to_string(), rq3.fl.row_label(r)];
                rec.extend(row.iter().map(|p| p.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    if let Some(rq4) = &report.rq4 {
        let path = dir.join("rq4_groups.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["order", "group", "start", "len", "cluster", "flagged"])?;
        for r in &rq4.reports {
            for (g, (desc, label)) in r.groups.iter().zip(&r.assignments).enumerate() {
                let cluster = match label {
                    ClusterLabel::Cluster(c) => c.to_string(),
                    ClusterLabel::Outlier => "outlier".to_string(),
                };
                w.write_record([
                    r.order.to_string(),
                    g.to_string(),
                    desc.start.to_string(),
                    desc.len.to_string(),
                    cluster,
                    r.flagged_groups.contains(&g).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Writes the report, the resolved config and every section CSV.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    let resolved = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&resolved, report.config.to_toml_string()?).map_err(|e| CliError::io(&resolved, e))?;
    write_section_csvs(dir, report)
}

/// Writes every artifact of a fresh run.
pub fn write_run(
    dir: &Path,
    report: &RunReport,
    ev: &Evaluation,
    transcript: &[TranscriptRecord],
    config_text: &str,
    metadata: &Metadata,
) -> Result<()> {
    write_report(dir, report)?;
    let verbatim = dir.join(CONFIG_FILE);
    fs::write(&verbatim, config_text).map_err(|e| CliError::io(&verbatim, e))?;
    write_predictions(&dir.join(PREDICTIONS_FILE), ev)?;
    let path = dir.join(TRANSCRIPT_FILE);
    write_jsonl(transcript, create(&path)?)?;
    write_json(&dir.join(METADATA_FILE), metadata)
}

#[derive(Deserialize)]
struct StoredHeader {
    run_id: String,
    data: DataSummary,
    warnings: Vec<String>,
}

/// Checks that every stored transcript record belongs to the run and that
/// inlined payloads match their digests.
pub fn verify_transcript(path: &Path, run_id: &str) -> Result<usize> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let records = read_jsonl(BufReader::new(file))?;
    for (i, r) in records.iter().enumerate() {
        if r.run_id != run_id {
            return Err(CliError::Config(format!("transcript line {} belongs to run {}", i + 1, r.run_id)));
        }
        if let Some(p) = &r.payload {
            if digest(p) != r.payload_digest {
                return Err(CliError::Config(format!("transcript line {}: payload digest mismatch", i + 1)));
            }
        }
    }
    Ok(records.len())
}

/// Recomputes the report of a stored run from its predictions. `cfg`
/// replaces the stored resolved config when given (e.g. a new δ).
pub fn replay(run_dir: &Path, cfg: Option<ExperimentConfig>) -> Result<RunReport> {
    let stored_path = run_dir.join(REPORT_FILE);
    let text = fs::read_to_string(&stored_path).map_err(|e| CliError::io(&stored_path, e))?;
    let header: StoredHeader = serde_json::from_str(&text)?;
    let cfg = match cfg {
        Some(c) => c,
        None => ExperimentConfig::load(&run_dir.join(RESOLVED_CONFIG_FILE))?.0,
    };
    let transcript = run_dir.join(TRANSCRIPT_FILE);
    if transcript.exists() {
        verify_transcript(&transcript, &header.run_id)?;
    }
    let ev = read_predictions(&run_dir.join(PREDICTIONS_FILE))?;
    assemble_report(&cfg, header.run_id, header.data, header.warnings, &ev)
}
