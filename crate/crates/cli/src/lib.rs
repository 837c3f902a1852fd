//! Experiment runner comparing federated models with their centralized
//! baselines.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{ExperimentConfig, Scenario};
pub use error::{CliError, Result};
pub use pipeline::{Evaluation, Experiment, Heterogeneity, RunReport, Verdict};

use fedmsa_core::dataio::{generate_synthetic, write_csv};

/// Trains both models, evaluates every enabled section and writes all
/// artifacts to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, out_dir: &Path, command: &str) -> Result<RunReport> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let clock = Instant::now();
    let exp = Experiment::prepare(cfg)?;
    let report = exp.report()?;
    let metadata = report::Metadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        run_id: exp.run_id.clone(),
        started_unix_ms: started,
        elapsed_ms: clock.elapsed().as_millis(),
        command: command.to_string(),
    };
    report::write_run(out_dir, &report, &exp.evaluation, &exp.transcript, config_text, &metadata)?;
    Ok(report)
}

/// Writes the configured synthetic dataset as CSV.
pub fn generate(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let data = generate_synthetic(&cfg.synthetic_spec())?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(&data, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Process exit code for a finished run: 0 iff every enabled verdict is within δ.
pub fn exit_code(report: &RunReport) -> i32 {
    if report.verdict.all_within {
        0
    } else {
        1
    }
}
