//! `survml`: simulate cohorts, fit and apply models, and run the nested-CV
//! Monte Carlo evaluation from the command line.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "survml", version, about = "Survival models on censored time-to-event data")]
pub struct Cli {
    /// JSON file with defaults for any subcommand; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a simulated cohort CSV and a JSON sidecar with the true parameters.
    Simulate(SimulateArgs),
    /// Fit one model and write it, with its preprocessing recipe, as JSON.
    Fit(FitArgs),
    /// Score a feature CSV with a fitted model.
    Predict(PredictArgs),
    /// Monte Carlo repetitions of stratified nested cross-validation.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Number of subjects.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of covariates [default: 5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// `linear` or `nonlinear` [default: linear].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Comma-separated coefficients [default: 1,-0.5,0.5,0,… for linear, zeros for nonlinear].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Weibull shape [default: 1.5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    /// Weibull scale [default: 60].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Target censored fraction [default: 0.3].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censoring: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Cohort CSV path [default: cohort.csv].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Sidecar path [default: <out>.truth.json].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Training CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Schema JSON [default: time/event columns as written by `simulate`].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// `cox`, `rsf` or `deephit` [default: cox].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Hyperparameters as inline JSON or a JSON file path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<String>,
    /// Drop columns at or above this missing fraction [default: 0.9].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_threshold: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Model JSON path [default: model.json].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    /// Feature CSV; a time column, when present, adds `cumhaz_at_time`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Extra horizons for cumulative hazard columns.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Vec<f64>>,
    /// Prediction CSV path [default: predictions.csv].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Cohort CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Schema JSON [default: time/event columns as written by `simulate`].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// `cox`, `rsf` or `deephit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Grid JSON (inline or file); list-valued fields are crossed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// [default: 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_k: Option<usize>,
    /// [default: 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_k: Option<usize>,
    /// Monte Carlo repetitions [default: 100].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Row label in the table [default: All].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// [default: 0.9]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_threshold: Option<f64>,
    /// Report JSON path [default: report.json].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Text table path [default: <out>.txt].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(run::Failure::Usage(msg)) => {
            use clap::CommandFactory;
            Cli::command()
                .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
                .exit()
        }
        Err(run::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
