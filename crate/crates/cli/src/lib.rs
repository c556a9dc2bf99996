//! Command-line front end: CSV in, CSV/JSON out, plus the simulation bench.

pub mod commands;
pub mod error;
pub mod io;
pub mod params;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};
pub use params::Params;

#[derive(Debug, Parser)]
#[command(
    name = "ckpca",
    version,
    about = "Corrected kernel PCA: reduction, change-point detection and clustering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce a CSV with the corrected spectrum; writes f(X) and a spectrum report.
    Reduce(Params),
    /// Detect change points (reduce, then energy divisive segmentation).
    Detect(Params),
    /// Iterative subspace clustering into --d categories.
    Cluster(Params),
    /// Monte-Carlo benchmark on a synthetic scenario.
    Bench {
        /// Scenario name (same as --scenario).
        #[arg(id = "scenario_name", value_name = "SCENARIO")]
        name: Option<String>,
        #[command(flatten)]
        params: Params,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Reduce(p) => commands::cmd_reduce(&p.resolve()?),
        Command::Detect(p) => commands::cmd_detect(&p.resolve()?),
        Command::Cluster(p) => commands::cmd_cluster(&p.resolve()?),
        Command::Bench { name, params } => commands::cmd_bench(&params.resolve()?, name.as_deref()),
    }
}
