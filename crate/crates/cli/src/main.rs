//! `eduloop`: ingest, train, evaluate, simulate, serve and feedback.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use eduloop_core::ncd::Optimizer;
use eduloop_core::simulate::Policy;
use eduloop_core::ErrorKind;

/// Bad flags or configuration (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "eduloop",
    version,
    about = "Diagnosis, adaptive recommendation and feedback"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for training, selection, simulation and synthetic data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw response export into the canonical CSV layout.
    Ingest(IngestArgs),
    /// Train the diagnosis model.
    Train(TrainArgs),
    /// Score a trained model on the held-out split.
    Evaluate(EvaluateArgs),
    /// Replay adaptive sessions offline under one or more policies.
    Simulate(SimulateArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Produce a feedback report for one student.
    Feedback(FeedbackArgs),
    /// Write a synthetic raw export.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw response log (CSV).
    #[arg(long)]
    pub log: PathBuf,
    /// `problem_id,text` table.
    #[arg(long)]
    pub item_texts: Option<PathBuf>,
    /// `src_skill_id,dst_skill_id,relation` table.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Reject bad graph rows instead of skipping them.
    #[arg(long)]
    pub strict_graph: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Canonical data directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Also write one CSV per metric for plotting.
    #[arg(long)]
    pub emit_plot_data: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Output directory; defaults to the model's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// becat, random, emc or gain; repeat or comma-separate for several.
    #[arg(long, value_delimiter = ',', default_value = "becat,random")]
    pub policy: Vec<Policy>,
    #[arg(long)]
    pub students: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "sessions")]
    pub sessions_dir: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Allowed browser origin; repeatable, `*` for any.
    #[arg(long)]
    pub cors_origin: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeedbackArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Raw student id.
    #[arg(long)]
    pub student: String,
    /// Number of items to recommend.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Chat-completion endpoint; without one the offline report is used.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub students: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub skills: Option<usize>,
    /// Mean attempts per student.
    #[arg(long)]
    pub attempts: Option<usize>,
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<eduloop_core::Error>() {
            return match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Numeric => 4,
                ErrorKind::Data | ErrorKind::Protocol => 3,
            };
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
