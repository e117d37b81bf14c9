//! Front end for the `dilatron` binary: input parsing, the four commands and
//! their reports.

pub mod commands;
pub mod input;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use dilatron_core::markov::DEFAULT_LABEL_CAP;
use dilatron_core::Decomposer;
use thiserror::Error;

pub use commands::run;
pub use report::{Record, Report};

/// Environment variable overriding the `N^N` size guard.
pub const SIZE_CAP_ENV: &str = "DILATRON_SIZE_CAP";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{context}: {source}")]
    Invalid { context: String, source: dilatron_core::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn invalid(context: &str, source: dilatron_core::Error) -> Self {
        CliError::Invalid { context: context.to_string(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sparse and canonical decompositions of every input matrix
    Decompose,
    /// Monte Carlo against exact and matrix-product state laws
    Simulate,
    /// Coupling, cocycle, Markov-property, flow and completion checks
    Verify,
    /// Kraus map, unitary dilation and trajectory checks
    Quantum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Quantum => "quantum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposerArg {
    Sparse,
    Canonical,
}

impl From<DecomposerArg> for Decomposer {
    fn from(d: DecomposerArg) -> Self {
        match d {
            DecomposerArg::Sparse => Decomposer::Sparse,
            DecomposerArg::Canonical => Decomposer::Canonical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Structured,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "dilatron", version, about = "Invertible dilations of finite Markov chains")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Matrix sequence document
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Environment window length W (default T + 1; T for `quantum`)
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Horizon T (default 3, or 2 for `quantum`; inhomogeneous inputs default to their length)
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true, default_value_t = 100_000)]
    pub replicas: u64,
    #[arg(long, global = true, value_enum, default_value_t = DecomposerArg::Sparse)]
    pub decomposer: DecomposerArg,
    /// Replaces the threshold of every floating-point check
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Upper bound on N^N label sets
    #[arg(long, global = true, env = SIZE_CAP_ENV, default_value_t = DEFAULT_LABEL_CAP)]
    pub size_cap: u128,
    /// Include wall-clock timings in the report
    #[arg(long, global = true)]
    pub timings: bool,
}

impl RunConfig {
    pub fn render(&self, report: &Report) -> String {
        match self.format {
            Format::Table => report.table(),
            Format::Structured => report.structured(),
        }
    }
}
