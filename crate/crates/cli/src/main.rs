//! `nvb`: generate meshes, run refinements and check the results.
//!
//! Exit codes: 0 when everything checked holds, 2 for usage, I/O and parse
//! errors, 3 when an invariant is violated, 1 when a numerical solve fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use nvb_core::generate::RefEdgePolicy;
use nvb_core::marking::{EdgeRule, MarkingStrategy};
use nvb_core::refine::{Dialect, PatternPolicy};
use nvb_core::stability::PathRule;

#[derive(Parser, Debug)]
#[command(name = "nvb", version, about = "Newest vertex bisection toolkit")]
pub struct Cli {
    /// Seed for every random choice (reference edges, marking, edge draws).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Format of the report written by analyze, stability and corr-check.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a built-in or file mesh as .nvbm.
    Generate(GenerateArgs),
    /// Run a refinement loop and write every mesh plus a trace.
    Refine(RefineArgs),
    /// Check level, neighbor and closure-counting properties of meshes.
    Analyze(AnalyzeArgs),
    /// Compute node weights, check the element conditions and measure the H1 constant.
    Stability(StabilityArgs),
    /// Build the bisection shadow of a red refinement run and check the correspondence.
    CorrCheck(CorrArgs),
}

#[derive(Args, Debug)]
pub struct MeshArgs {
    /// Built-in name (square2, lshape6, gridN) or path to an .nvbm file.
    pub mesh: String,
    /// Reference edges of the initial elements.
    #[arg(long, value_enum, default_value_t = RefEdges::AsGiven)]
    pub ref_edges: RefEdges,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefEdges {
    AsGiven,
    LongestEdge,
    Random,
}

impl RefEdges {
    fn policy(self, seed: u64) -> RefEdgePolicy {
        match self {
            RefEdges::AsGiven => RefEdgePolicy::AsGiven,
            RefEdges::LongestEdge => RefEdgePolicy::LongestEdge,
            RefEdges::Random => RefEdgePolicy::Random { seed },
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// File name inside the output directory; defaults to `<name>.nvbm`.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct MarkingArgs {
    #[arg(long, value_enum, default_value_t = MarkingKind::All)]
    pub marking: MarkingKind,
    /// Marking probability for `random`.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// Center for `corner` and `dorfler`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub y: f64,
    /// Radius for `corner`.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Bulk parameter for `dorfler`.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Indicator exponent for `dorfler`.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Marked edges of marked elements (ignored by refine-nvb).
    #[arg(long, value_enum, default_value_t = EdgeChoice::Reference)]
    pub edges: EdgeChoice,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MarkingKind {
    All,
    Random,
    Corner,
    Dorfler,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EdgeChoice {
    Reference,
    All,
    Random,
}

impl MarkingArgs {
    fn strategy(&self, seed: u64) -> MarkingStrategy {
        match self.marking {
            MarkingKind::All => MarkingStrategy::All,
            MarkingKind::Random => MarkingStrategy::Random { p: self.p, seed },
            MarkingKind::Corner => MarkingStrategy::Corner { x: self.x, y: self.y, r: self.r },
            MarkingKind::Dorfler => {
                MarkingStrategy::Dorfler { theta: self.theta, alpha: self.alpha, x: self.x, y: self.y }
            }
        }
    }

    fn edge_rule(&self, seed: u64) -> EdgeRule {
        match self.edges {
            EdgeChoice::Reference => EdgeRule::Reference,
            EdgeChoice::All => EdgeRule::All,
            EdgeChoice::Random => EdgeRule::Random { seed },
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DialectArg {
    RefineNvb,
    RefineNvb3,
    RefineNvbRed,
    Refine,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Self {
        match d {
            DialectArg::RefineNvb => Dialect::RefineNvb,
            DialectArg::RefineNvb3 => Dialect::RefineNvb3,
            DialectArg::RefineNvbRed => Dialect::RefineNvbRed,
            DialectArg::Refine => Dialect::Refine,
        }
    }
}

/// Pattern for elements with all three edges marked.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Bisec3,
    Red,
    Bisec5,
}

impl PolicyArg {
    fn policy(self) -> PatternPolicy {
        match self {
            PolicyArg::Bisec3 => PatternPolicy::AlwaysBisec3,
            PolicyArg::Red => PatternPolicy::AlwaysRed,
            PolicyArg::Bisec5 => PatternPolicy::InteriorNode,
        }
    }
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, value_enum, default_value_t = DialectArg::RefineNvb)]
    pub dialect: DialectArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Bisec3)]
    pub policy: PolicyArg,
    #[command(flatten)]
    pub marking: MarkingArgs,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Mesh files in refinement order, or run directories holding step_*.nvbm.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Initial mesh; defaults to the first input mesh.
    #[arg(long)]
    pub initial: Option<String>,
    /// Dialect that produced the meshes; read from run.json when omitted.
    #[arg(long, value_enum)]
    pub dialect: Option<DialectArg>,
    /// Trace CSV with a `marked` column; trace.csv of a run directory is used when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Flag ledger rows whose growth ratio exceeds this bound.
    #[arg(long)]
    pub rho_bound: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PathRuleArg {
    /// Paths step across shared edges.
    Edge,
    /// Paths step across shared nodes.
    Node,
}

impl From<PathRuleArg> for PathRule {
    fn from(p: PathRuleArg) -> Self {
        match p {
            PathRuleArg::Edge => PathRule::SharedEdge,
            PathRuleArg::Node => PathRule::SharedNode,
        }
    }
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    /// Uniform refinements of the coarse mesh used for the measurement; 0 skips it.
    #[arg(long, default_value_t = 2)]
    pub fine_levels: usize,
    #[arg(long, value_enum, default_value_t = PathRuleArg::Edge)]
    pub path_rule: PathRuleArg,
    /// Weights CSV (`node,...,d`) to check instead of computed weights.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Debug: rescale one weight of element 0 so its weight ratio is at least this.
    #[arg(long)]
    pub debug_inject_ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CorrArgs {
    #[command(flatten)]
    pub mesh: MeshArgs,
    #[arg(long, value_enum, default_value_t = PolicyArg::Red)]
    pub policy: PolicyArg,
    #[command(flatten)]
    pub marking: MarkingArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nvb_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use nvb_core::Error as E;
        match self {
            CliError::Core(E::Invariant(_)) => 3,
            CliError::Core(E::NumericFailure { .. }) => 1,
            _ => 2,
        }
    }
}

/// Result of a command that ran to completion.
pub enum Outcome {
    Pass,
    /// Something checked did not hold; the message names it.
    Violation(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
