//! `bdcdn`: validate cases, run power flows and optimal power flows on
//! bipolar DC networks, and export solver artifacts.
//!
//! Exit codes: 0 ok, 1 case diagnostics, 2 parse or usage error, 3 power flow
//! did not converge, 4 infeasible, 5 not converged within the outer
//! iteration limit (or the solver gave up), 6 I/O failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bdcdn", version, about = "Convex optimal power flow for bipolar DC distribution networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a case file and print one diagnostic per line.
    Validate(CaseArgs),
    /// Run the nonconvex power flow at the case's own dispatch.
    Pf(RunArgs),
    /// Optimise one snapshot with sequential bound tightening.
    Opf(RunArgs),
    /// Optimise every timestep of the load profile.
    Horizon(RunArgs),
    /// Write the conic program dump, its row census and the iteration trace.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CaseArgs {
    /// Case file, or `builtin:<name>` (feeder5, ieee33_bipolar).
    #[arg(long)]
    pub case: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    DgSizing,
    Operation,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    /// Load profile CSV (`t,p,n,b`); defaults to the profile stored in the case.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Timestep (1-based) or `extreme`. Without it the case's base loads are used.
    #[arg(long)]
    pub snapshot: Option<String>,
    /// Defaults to dg-sizing for `opf` and operation for `horizon`.
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    /// Outer-loop tolerance on the product gap.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bound-tightening step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub prices: Prices,
}

/// Weight and price overrides.
#[derive(Args, Debug, Clone, Default)]
pub struct Prices {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// DG price, $/kW.
    #[arg(long)]
    pub cg: Option<f64>,
    /// Loss price, $/kWh.
    #[arg(long)]
    pub closs: Option<f64>,
    #[arg(long)]
    pub avb: Option<f64>,
    #[arg(long)]
    pub bvb: Option<f64>,
    #[arg(long)]
    pub cvb: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Run the optimisation and export its final program and trace. Without
    /// it the program at the initial bounds is written with an empty trace.
    #[arg(long)]
    pub solve: bool,
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

pub const EXIT_DIAGNOSTICS: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_PF: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_UNCONVERGED: u8 = 5;
pub const EXIT_IO: u8 = 6;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Pf(a) => commands::pf(a),
        Command::Opf(a) => commands::opf(a),
        Command::Horizon(a) => commands::horizon(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
