use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use yarnsim::config;
use yarnsim::queue::ScenarioKind;
use yarnsim::report::{self, SummaryRow};
use yarnsim::scheduler::SpcKind;

#[derive(Parser)]
#[command(name = "yarnsim", version, about = "Discrete-event simulator of a YARN-like cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write apps.csv, series.csv, summary.csv and events.log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// cap-fifo, fair-fifo, fair-fair or fair-drf.
        #[arg(long, value_parser = parse_spc)]
        spc: Option<SpcKind>,
        /// one-queue, separate-queue or merged-queue.
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<ScenarioKind>,
    },
    /// Run every (spc, scenario, seed) cell and write matrix.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repetitions per cell, using seeds 1..=N.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Recompute the metrics of a saved event log and print its summary.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn parse_spc(s: &str) -> Result<SpcKind, String> {
    SpcKind::parse(s).ok_or_else(|| format!("unknown policy `{s}`"))
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    match ScenarioKind::parse(s) {
        Some(ScenarioKind::Custom) | None => Err(format!("unknown scenario `{s}`")),
        Some(k) => Ok(k),
    }
}

fn print_summary(row: &SummaryRow) -> yarnsim::Result<()> {
    print!("{}", report::summary_csv(row)?);
    Ok(())
}

fn run(cli: Cli) -> yarnsim::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            spc,
            scenario,
        } => {
            let mut cfg = config::load(&config)?;
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            if let Some(spc) = spc {
                cfg.run.spc = spc;
            }
            if let Some(scenario) = scenario {
                cfg.queues.scenario = scenario;
                cfg.queues.queue.clear();
            }
            let (_, row) = report::run_command(&cfg, &out)?;
            print_summary(&row)
        }
        Command::Sweep { config, out, seeds } => {
            let cfg = config::load(&config)?;
            let matrix = report::sweep_command(&cfg, &out, seeds)?;
            print!("{}", report::matrix_csv(&matrix)?);
            Ok(())
        }
        Command::Replay { log } => {
            let (_, row) = report::replay(&log)?;
            print_summary(&row)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
