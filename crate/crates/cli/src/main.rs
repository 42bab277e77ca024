//! `relex` — relation extraction over standoff-annotated corpora.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data error,
//! 3 training/inference error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, RawConfig, UsageError};

#[derive(Parser)]
#[command(
    name = "relex",
    version,
    about = "Classify relations between annotated concept pairs in clinical text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the pipeline commands. Values given here override the
/// config file.
#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin schema name (n2c2, made1.0) or schema file path.
    #[arg(long)]
    schema: Option<String>,
    /// Directory of <doc>.txt / <doc>.ann pairs.
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Trained bundle directory (defaults to $RELEX_BUNDLE_DIR/default).
    #[arg(long)]
    bundle_dir: Option<PathBuf>,
    /// Maximum cross-sentence distance for candidate generation.
    #[arg(long)]
    max_csd: Option<usize>,
    /// binary or multi-class.
    #[arg(long)]
    strategy: Option<String>,
    /// Representation scheme 1-4.
    #[arg(long)]
    scheme: Option<String>,
    /// unified or distance-specific.
    #[arg(long)]
    regime: Option<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Training batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Encoder spec, e.g. reference:2x2x64.
    #[arg(long)]
    encoder: Option<String>,
    /// Accept hyperparameters outside the standard grid.
    #[arg(long)]
    allow_nonstandard: bool,
    /// Extra KEY=VALUE config overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled candidate pairs and corpus statistics.
    Candidates {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train a relation classifier, optionally grid-searched by
    /// cross-validation, and persist the bundle.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Run five-fold cross-validation over the epoch/batch grid first.
        #[arg(long)]
        grid: bool,
    },
    /// Apply a trained bundle to a corpus, writing standoff predictions.
    Predict {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory for prediction files (defaults to output_dir).
        #[arg(long)]
        predictions_dir: Option<PathBuf>,
    },
    /// Score predictions against gold annotations.
    Evaluate {
        /// Gold corpus directory (<doc>.txt / <doc>.ann).
        #[arg(long)]
        gold_dir: PathBuf,
        /// Directory of predicted <doc>.ann files.
        #[arg(long)]
        predictions_dir: PathBuf,
        /// Where to write report.txt / report.tsv.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Also write a per-CSD breakdown.
        #[arg(long)]
        per_csd: bool,
    },
    /// Run every cell of the strategy/scheme/regime/max_csd grid,
    /// resuming from the completed-cell ledger.
    Experiment {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Print a builtin or custom schema.
    Schema {
        /// Builtin name (n2c2, made1.0) or schema file path.
        spec: String,
    },
}

fn raw_config(common: &CommonOpts) -> anyhow::Result<RawConfig> {
    let mut raw = match &common.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    if let Some(v) = &common.schema {
        raw.set("schema", v.clone());
    }
    if let Some(v) = &common.corpus_dir {
        raw.set("corpus_dir", v.display().to_string());
    }
    if let Some(v) = &common.output_dir {
        raw.set("output_dir", v.display().to_string());
    }
    if let Some(v) = &common.bundle_dir {
        raw.set("bundle_dir", v.display().to_string());
    }
    if let Some(v) = common.max_csd {
        raw.set("max_csd", v.to_string());
    }
    if let Some(v) = &common.strategy {
        raw.set("strategy", v.clone());
    }
    if let Some(v) = &common.scheme {
        raw.set("scheme", v.clone());
    }
    if let Some(v) = &common.regime {
        raw.set("regime", v.clone());
    }
    if let Some(v) = common.seed {
        raw.set("seed", v.to_string());
    }
    if let Some(v) = common.epochs {
        raw.set("epochs", v.to_string());
    }
    if let Some(v) = common.batch_size {
        raw.set("batch_size", v.to_string());
    }
    if let Some(v) = common.learning_rate {
        raw.set("learning_rate", v.to_string());
    }
    if let Some(v) = &common.encoder {
        raw.set("encoder", v.clone());
    }
    if common.allow_nonstandard {
        raw.set("allow_nonstandard", "true");
    }
    raw.apply_overrides(&common.overrides)?;
    Ok(raw)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Candidates { common } => {
            let raw = raw_config(&common)?;
            let config = ExperimentConfig::from_raw(&raw)?;
            commands::cmd_candidates(&config, &raw)
        }
        Command::Train { common, grid } => {
            let raw = raw_config(&common)?;
            let config = ExperimentConfig::from_raw(&raw)?;
            commands::cmd_train(&config, &raw, grid)
        }
        Command::Predict { common, predictions_dir } => {
            let mut raw = raw_config(&common)?;
            if let Some(dir) = predictions_dir {
                raw.set("predictions_dir", dir.display().to_string());
            }
            let config = ExperimentConfig::from_raw(&raw)?;
            commands::cmd_predict(&config, &raw)
        }
        Command::Evaluate { gold_dir, predictions_dir, output_dir, per_csd } => {
            let mut raw = RawConfig::default();
            raw.set("gold_dir", gold_dir.display().to_string());
            raw.set("predictions_dir", predictions_dir.display().to_string());
            commands::cmd_evaluate(
                &gold_dir,
                &predictions_dir,
                output_dir.as_deref(),
                per_csd,
                &raw,
            )
        }
        Command::Experiment { common } => {
            let raw = raw_config(&common)?;
            let config = ExperimentConfig::from_raw(&raw)?;
            commands::cmd_experiment(&config, &raw)
        }
        Command::Schema { spec } => commands::cmd_schema(&spec),
    }
}

/// Exit-code classification: configuration problems are 1, unreadable or
/// malformed data is 2, training/inference failures are 3.
fn exit_code_for(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return 1;
        }
        if cause.is::<relex_core::corpus::CorpusError>()
            || cause.is::<relex_core::schema::SchemaError>()
            || cause.is::<relex_core::candidates::CandidateError>()
            || cause.is::<relex_core::evaluation::EvalError>()
        {
            return 2;
        }
        if cause.is::<relex_core::model::ModelError>()
            || cause.is::<relex_core::inference::InferenceError>()
            || cause.is::<relex_core::encoding::EncodingError>()
        {
            return 3;
        }
    }
    3
}

/// Die quietly when a pipe closes (e.g. `relex schema n2c2 | head`).
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
