//! `kdrive`: train the per-vector current models, simulate the controller
//! benchmark, and build the comparison report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use koopman_drive::commands::{cmd_compare, cmd_report, cmd_run, cmd_train};
use koopman_drive::config::{apply_overrides, load_config};

#[derive(Parser)]
#[command(
    name = "kdrive",
    version,
    about = "Koopman-model predictive current control benchmark for an inverter-fed IPMSM"
)]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for all artifacts (models, logs, reports, figures).
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Overrides the training seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Configuration override as a dotted path, e.g.
    /// `training.duration=0.2` or `scenario.nominal_1000.record_fine=false`.
    /// Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the excitation experiment and fit one model per voltage vector.
    Train,
    /// Simulate a single scenario with a single controller.
    Run {
        /// Scenario name from the configuration.
        #[arg(long)]
        scenario: String,
        /// One of: koopman-mpc, whitebox-mpc, foc.
        #[arg(long)]
        controller: String,
    },
    /// Simulate the full scenario-controller matrix and write the report.
    Compare,
    /// Rebuild report and figures from logs on disk without simulating.
    Report,
}

fn dispatch(cli: &Cli) -> koopman_drive::Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_overrides(&mut cfg, &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
    }
    match &cli.command {
        Command::Train => cmd_train(&cfg, &cli.out),
        Command::Run {
            scenario,
            controller,
        } => cmd_run(&cfg, &cli.out, scenario, controller),
        Command::Compare => cmd_compare(&cfg, &cli.out),
        Command::Report => cmd_report(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::Train => "train",
        Command::Run { .. } => "run",
        Command::Compare => "compare",
        Command::Report => "report",
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("kdrive {stage}: error: {err}");
            ExitCode::FAILURE
        }
    }
}
