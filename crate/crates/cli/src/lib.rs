//! Command line front end: reads a scenario file, runs one pipeline of
//! `watatani` and emits a deterministic JSON report or an aligned table.

pub mod commands;
pub mod render;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use watatani::angle::AnglePath;

pub use commands::{execute, Output};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] watatani::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "watatani", version, about = "Watatani indices, quasi-bases and angles for matrix *-algebra inclusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Watatani index, its spectrum and a probabilistic-index estimate.
    Index(RunArgs),
    /// Orthonormal (Pimsner–Popa) basis and reconstruction residuals.
    QuasiBasis(RunArgs),
    /// Interior angle between the scenario's two intermediates.
    Angle(RunArgs),
    /// Exterior angle between the scenario's two intermediates.
    ExteriorAngle(RunArgs),
    /// Angle matrix over every proper intermediate subgroup.
    Lattice(RunArgs),
    /// Runs every invariant check on the scenario.
    Verify(RunArgs),
    /// Schema and containment checks only.
    Validate(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Index(_) => "index",
            Command::QuasiBasis(_) => "quasi-basis",
            Command::Angle(_) => "angle",
            Command::ExteriorAngle(_) => "exterior-angle",
            Command::Lattice(_) => "lattice",
            Command::Verify(_) => "verify",
            Command::Validate(_) => "validate",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Index(a)
            | Command::QuasiBasis(a)
            | Command::Angle(a)
            | Command::ExteriorAngle(a)
            | Command::Lattice(a)
            | Command::Verify(a)
            | Command::Validate(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Definition,
    Quasibasis,
    Both,
}

impl From<PathArg> for AnglePath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Definition => AnglePath::Definition,
            PathArg::Quasibasis => AnglePath::Quasibasis,
            PathArg::Both => AnglePath::Both,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Matrix-equality tolerance (operator norm).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Eigenvalue cutoff for pseudo-inverses.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Agreement tolerance for angle paths and oracles.
    #[arg(long)]
    pub angle_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub path: PathArg,
    /// Angle-matrix CSV for `lattice`; defaults to the report path with a
    /// `.csv` extension when `--out` is given.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|err| CliError::Io(format!("cannot write {}: {err}", path.display())))
}

/// Runs a parsed command line, writing outputs; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    match execute(&cli.command) {
        Ok(output) => {
            let text = match args.format {
                Format::Json => render::json(&output.report),
                Format::Table => render::table(&output.report),
            };
            let mut written = match &args.out {
                Some(path) => write_file(path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            if let (Ok(()), Some(csv)) = (&written, &output.csv) {
                let target = args
                    .csv
                    .clone()
                    .or_else(|| args.out.as_ref().map(|p| p.with_extension("csv")));
                if let Some(path) = target {
                    written = write_file(&path, csv);
                }
            }
            match written {
                Err(err) => {
                    eprintln!("error: {err}");
                    err.exit_code()
                }
                Ok(()) => {
                    if let Some(msg) = &output.failure {
                        eprintln!("error: {msg}");
                    }
                    output.exit_code
                }
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
