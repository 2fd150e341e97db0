//! Config-driven experiment runner: `generate`, `train`, `grid`, `report`.

pub mod checkpoint;
mod commands;
mod config;
mod results;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_generate, cmd_grid, cmd_report, cmd_train, load_series, mean_cv, prepare_data, render_stats, ClientStats,
    Report, TrainOutput,
};
pub use config::{DataSource, EvalConfig, ExperimentConfig, FederationSection, GridSpec, ModelConfig};
pub use results::{read_jsonl, write_jsonl, CellKey, ResultRecord, ResultRow, ResultTable, TABLE_HEADER};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "plfl", version, about = "Federated load forecasting with personalization layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic client CSVs and print their mean/std table.
    Generate(RunArgs),
    /// Train the single cell named in the config's [federation] table.
    Train(RunArgs),
    /// Run every cell of the config's [grid] table.
    Grid(RunArgs),
    /// Collate results files into CSV tables.
    Report {
        /// Directory searched recursively for *.jsonl results.
        results: PathBuf,
        /// Where the tables go; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub parallel: Option<usize>,
}

impl RunArgs {
    /// The config file (or defaults) with flag overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(p) = self.parallel {
            cfg.parallel = p;
        }
        Ok(cfg)
    }
}

/// Execute a parsed command line, printing human-readable output to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = a.resolve()?;
            let stats = cmd_generate(&cfg)?;
            print!("{}", render_stats(&stats));
            println!("wrote {} files to {}", stats.len(), cfg.out_dir.display());
        }
        Command::Train(a) => {
            let out = cmd_train(&a.resolve()?)?;
            let r = &out.row;
            println!(
                "{} {} {}: mean test MASE {}, {} bytes per round per client",
                r.cell.scheme,
                r.cell.client_opt,
                r.cell.server_opt,
                r.mean_test_mase.map(|v| format!("{v:.4}")).unwrap_or("-".into()),
                r.bytes_per_round_per_client
            );
            println!("results: {}", out.results.display());
        }
        Command::Grid(a) => {
            let table = cmd_grid(&a.resolve()?)?;
            print!("{}", table.render_matrix());
            let failed = table.rows.iter().filter(|r| !r.is_ok()).count();
            if failed > 0 {
                println!("{failed} of {} cells failed", table.rows.len());
            }
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            let rep = cmd_report(&results, &out)?;
            println!("{} files, {} runs -> {}", rep.files, rep.summaries.len(), out.display());
        }
    }
    Ok(())
}
