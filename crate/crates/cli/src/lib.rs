//! The `ioredux` command line: sample, evaluate, reduce, verify, plan, report.
//!
//! Every command reads and writes plain files in one working directory and
//! leaves a `<artifact>.manifest.json` beside its primary output. Downstream
//! commands re-hash their inputs against those manifests and refuse to run
//! on a mismatch.

mod commands;
pub mod exit;
mod files;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use exit::{CliError, CliResult};

pub const DESIGN_CSV: &str = "design.csv";
pub const DESIGN_JSON: &str = "design.json";
pub const SNAPSHOTS_CSV: &str = "snapshots.csv";
pub const ROM_JSON: &str = "rom.json";
pub const ROM_SUMMARY: &str = "rom_summary.txt";
pub const VERIFICATION_CSV: &str = "verification.csv";
pub const PLANS_CSV: &str = "plans.csv";
pub const LOADINGS_CSV: &str = "loadings.csv";
pub const DIRECTIONS_CSV: &str = "directions.csv";

#[derive(Debug, Parser)]
#[command(
    name = "ioredux",
    version,
    about = "Reduced-order input/output planning for parameterized models"
)]
pub struct Cli {
    /// Workflow config (TOML). The bundled default is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory holding the workflow artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub dir: PathBuf,

    /// Log progress to stderr (-vv for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the sparse-grid design.
    Sample(SampleArgs),
    /// Run the model at every design point and write the snapshot matrix.
    Evaluate(JobsArgs),
    /// Build the reduced-order model from design and snapshots.
    Reduce(ReduceArgs),
    /// Check the reduced input directions against the model.
    Verify(VerifyArgs),
    /// Turn output targets into parameter plans.
    Plan(PlanArgs),
    /// Export loadings and reduced input directions.
    Report,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Sparse-grid level; overrides `design.level`.
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Debug, Args)]
pub struct JobsArgs {
    /// Model runs in flight at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Retained-variance threshold; overrides `reduce.variance_threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Step multiple along each direction; overrides `verify.delta`.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// CSV with header `target_id,<output labels>`.
    #[arg(long, value_name = "PATH")]
    pub targets: PathBuf,
    /// Run the model at each plan and report achieved outputs.
    #[arg(long)]
    pub evaluate: bool,
    /// Exit with the targets code when any plan had to be clamped.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}
