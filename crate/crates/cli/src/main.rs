use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dccl_cli::config::parse_config;
use dccl_cli::{inspect, report_sizes, run_plan, RunOptions};

#[derive(Parser)]
#[command(name = "dccl", version, about = "Device-cloud collaborative learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every experiment of a config file (or bundled preset name).
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed of every run.
        #[arg(long)]
        seed: Option<u64>,
        /// Leave the timestamp and wall-clock columns empty.
        #[arg(long)]
        no_timestamp: bool,
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Print per-layer parameter and FLOP counts of the configured models.
    ReportSizes { config: PathBuf },
    /// Describe a checkpoint file.
    Inspect { checkpoint: PathBuf },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.cmd {
        Cmd::Run {
            config,
            out: dir,
            seed,
            no_timestamp,
            no_checkpoints,
        } => {
            let mut plan = parse_config(&config)?;
            if let Some(s) = seed {
                plan = plan.with_seed(s);
            }
            let opts = RunOptions {
                no_timestamp,
                skip_checkpoints: no_checkpoints,
            };
            let summary = run_plan(&plan, &dir, &opts, &mut out)?;
            if summary.failed > 0 {
                eprintln!("{} of {} runs failed", summary.failed, summary.total);
            }
            Ok(if summary.all_failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Cmd::ReportSizes { config } => {
            report_sizes(&parse_config(&config)?, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Inspect { checkpoint } => {
            inspect(&checkpoint, &mut out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
