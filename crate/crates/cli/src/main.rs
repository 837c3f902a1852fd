use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedmsa_cli::{exit_code, generate, report, run_experiment, CliError, ExperimentConfig, RunReport};

#[derive(Parser)]
#[command(name = "fedmsa", version, about = "Compare federated and centralized failure-prediction models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; re-derives every component seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every equivalence margin.
    #[arg(long)]
    delta: Option<f64>,
    /// Inline message payloads in the transcript.
    #[arg(long)]
    log_payloads: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Target file; `<out>/data.csv` by default.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Full pipeline.
    Run(Common),
    /// Whole-set metric comparison only.
    Rq1(Common),
    /// Random-group metric comparison only.
    Rq2(Common),
    /// Error Markov model comparison only.
    Rq3(Common),
    /// Label heterogeneity analysis only.
    Rq4(Common),
    /// Recompute the report of a stored run from its predictions.
    Replay {
        /// Directory of the stored run.
        run_dir: PathBuf,
        /// Where to write the recomputed report; the run directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, String), CliError> {
    let (mut cfg, text) = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let cfg = ExperimentConfig::default();
            let text = cfg.to_toml_string()?;
            (cfg, text)
        }
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_master_seed(seed);
    }
    if let Some(delta) = common.delta {
        cfg = cfg.with_delta(delta);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.log_payloads |= common.log_payloads;
    Ok((cfg, text))
}

fn only(mut cfg: ExperimentConfig, section: usize) -> ExperimentConfig {
    cfg.rq1 = section == 1;
    cfg.rq2 = section == 2;
    cfg.rq3 = section == 3;
    cfg.rq4 = section == 4;
    cfg
}

fn summarize(report: &RunReport) {
    for (rq, yes) in &report.verdict.answers {
        println!("{rq}: {}", if *yes { "Y" } else { "N" });
    }
    if let Some(h) = report.verdict.heterogeneity {
        println!("rq4: {h:?} heterogeneity");
    }
    if let Some(c) = &report.verdict.conclusion {
        println!("{c}");
    }
    if !report.verdict.all_within {
        eprintln!("not within δ: {}", report.verdict.failing.join(", "));
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let (common, section, name) = match cli.command {
        Command::Generate { common, file } => {
            let (cfg, _) = load(&common)?;
            let path = file.unwrap_or_else(|| cfg.out_dir.join("data.csv"));
            generate(&cfg, &path)?;
            println!("wrote {}", path.display());
            return Ok(0);
        }
        Command::Replay { run_dir, out, delta } => {
            let cfg = match delta {
                Some(d) => Some(ExperimentConfig::load(&run_dir.join(report::RESOLVED_CONFIG_FILE))?.0.with_delta(d)),
                None => None,
            };
            let rep = report::replay(&run_dir, cfg)?;
            report::write_report(out.as_deref().unwrap_or(&run_dir), &rep)?;
            summarize(&rep);
            return Ok(exit_code(&rep));
        }
        Command::Run(c) => (c, 0, "run"),
        Command::Rq1(c) => (c, 1, "rq1"),
        Command::Rq2(c) => (c, 2, "rq2"),
        Command::Rq3(c) => (c, 3, "rq3"),
        Command::Rq4(c) => (c, 4, "rq4"),
    };
    let (mut cfg, text) = load(&common)?;
    if section > 0 {
        cfg = only(cfg, section);
    }
    let out = cfg.out_dir.clone();
    let rep = run_experiment(&cfg, &text, &out, name)?;
    summarize(&rep);
    Ok(exit_code(&rep))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
