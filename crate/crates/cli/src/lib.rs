// SPDX-License-Identifier: Apache-2.0

//! Command-line driver: `run` over a corpus, `sweep` a single module's
//! clock, and `report` from a previous run's outcome log.

pub mod commands;
pub mod config;
pub mod outcome_log;

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use clap::{Parser, Subcommand, ValueEnum};
use hdlrepair_core::gateway::TraceMode;

pub use commands::{cmd_report, cmd_run, cmd_sweep, RunOverrides, SweepArgs};

#[derive(Debug, Parser)]
#[command(
    name = "hdlrepair",
    version,
    about = "Generate, verify and repair Verilog with a language model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl From<Mode> for TraceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Live => TraceMode::Live,
            Mode::Record => TraceMode::Record,
            Mode::Replay => TraceMode::Replay,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and repair every design of a corpus, then write reports.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        keep_artifacts: bool,
        /// Print the planned number of generations and exit.
        #[arg(long)]
        dry_run: bool,
        /// Continue the run logged in --out, skipping finished candidates.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Find the fastest clock period a module meets timing at.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Design name (its top module is looked up when --corpus is given).
        #[arg(long)]
        design: String,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Output path for the report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild report files from an outcome log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run_cli(cli: Cli, interrupt: &AtomicBool, stdout: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Run {
            corpus,
            config,
            mode,
            trace,
            out,
            workers,
            keep_artifacts,
            dry_run,
            resume,
            seed,
        } => cmd_run(
            &RunOverrides {
                corpus,
                config,
                mode: mode.map(Into::into),
                trace,
                out,
                workers,
                keep_artifacts,
                dry_run,
                resume,
                seed,
            },
            interrupt,
            stdout,
        ),
        Command::Sweep {
            config,
            corpus,
            design,
            source,
            lo,
            hi,
            tol,
            report,
            out,
        } => cmd_sweep(
            &SweepArgs {
                config,
                corpus,
                design,
                source,
                lo_ps: lo,
                hi_ps: hi,
                tol_ps: tol,
                report,
                out,
            },
            stdout,
        ),
        Command::Report { log, out } => cmd_report(&log, &out, stdout),
    }
}
