//! Library half of the `nsbox` command: argument types, command
//! implementations and the report types their `--json` output parses into.

pub mod commands;
pub mod expr;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const INVALID_BOX: u8 = 2;
    pub const VERIFICATION: u8 = 3;
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn invalid_box(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: exit::INVALID_BOX, error: error.into() }
    }

    pub fn verification(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: exit::VERIFICATION, error: error.into() }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        Failure { code: exit::USAGE, error: error.into() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nsbox", version, about = "Exact analysis of two-input, two-output nonsignaling boxes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a box from an expression and write it as an nsbox/1 document.
    Make(MakeArgs),
    /// Validate a box and report NL, CHSH values, locality and its PR fraction.
    Analyze(AnalyzeArgs),
    /// Decompose a box into weighted components and write a manifest.
    Decompose(DecomposeArgs),
    /// Key-rate bounds for a box or the noisy-PR family.
    Keyrate(KeyrateArgs),
    /// Run the key-distribution protocol on a box by Monte Carlo.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct MakeArgs {
    /// `det:αβγε`, `pr:αβγ`, `noise`, `noisy-pr:αβγ:p` or `mix:w*EXPR+...`.
    pub expr: String,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub path: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposeMode {
    /// PR-box fraction plus certified residual.
    PrFraction,
    /// Convex weights over the 24 polytope vertices.
    Vertex,
    /// Numerical search for a two-valued local model.
    Dim2,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub path: PathBuf,
    #[arg(long, value_enum)]
    pub mode: DecomposeMode,
    /// Master seed of the dim2 search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Restarts of the dim2 search.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    /// Directory for the manifest and component documents. Without it the
    /// manifest is printed and no files are written.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    NoisyPr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// The PR fraction.
    P,
    /// The Werner visibility, p = W/√2.
    Werner,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["family", "box_path"])))]
pub struct KeyrateArgs {
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Analyze this nsbox/1 document instead of a family member.
    #[arg(long = "box", value_name = "PATH", conflicts_with_all = ["p", "werner", "sweep"])]
    pub box_path: Option<PathBuf>,
    /// PR-box label of the family.
    #[arg(long, default_value = "000")]
    pub label: String,
    /// PR fraction.
    #[arg(long, group = "point")]
    pub p: Option<String>,
    /// Werner visibility.
    #[arg(long, group = "point")]
    pub werner: Option<String>,
    /// Inclusive grid `lo:hi:n`.
    #[arg(long, group = "point")]
    pub sweep: Option<String>,
    /// Parameter swept by `--sweep`.
    #[arg(long, value_enum, default_value = "p", requires = "sweep")]
    pub param: SweepParam,
    /// Emit CSV rows with a header.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["family", "box_path"])))]
pub struct SimulateArgs {
    #[arg(long = "box", value_name = "PATH")]
    pub box_path: Option<PathBuf>,
    #[arg(long, value_enum, requires = "p")]
    pub family: Option<Family>,
    #[arg(long, default_value = "000")]
    pub label: String,
    /// PR fraction of the family member.
    #[arg(long, requires = "family")]
    pub p: Option<String>,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report z-scores against the exact values.
    #[arg(long)]
    pub compare_analytic: bool,
    /// Write per-round `x,y,a,b` records as CSV.
    #[arg(long, value_name = "PATH")]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}
