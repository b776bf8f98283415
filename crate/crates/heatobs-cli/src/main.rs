use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatobs::runner::{emit_plot_data, run_config, ExperimentConfig, ExperimentKind, WORKERS_ENV};
use heatobs::Error;

#[derive(Parser)]
#[command(name = "heatobs", version, about = "Heat-equation observability experiments on a periodic proxy of R^n")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV report, JSON sidecar and timings.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 or unset means all logical cores.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal window density of the set at each scale.
    Thickness(RunArgs),
    /// Spectral-inequality constant over a list of band limits.
    SpectralSweep(RunArgs),
    /// Observability constant for each final time.
    ObsEstimate(RunArgs),
    /// Interpolation constants of sampled initial data.
    Interpolation(RunArgs),
    /// Translated-Gaussian ratios against the closed-form bound.
    Counterexample(RunArgs),
    /// Closed-form constant chain over a parameter grid.
    ConstantsChain(RunArgs),
    /// Audit one weighted inequality over a parameter grid.
    Audit(RunArgs),
    /// Turn a report into a whitespace-separated numeric file.
    PlotData {
        /// Report CSV written by one of the other subcommands.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let cfg = match ExperimentConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    if cfg.experiment.kind() != kind {
        eprintln!(
            "error: experiment.kind: config describes {} but the subcommand is {}",
            cfg.experiment.kind().as_str(),
            kind.as_str()
        );
        return ExitCode::from(2);
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let workers = args.workers.or(cfg.workers).unwrap_or(0);
    match run_config(&cfg, &args.out, seed, workers) {
        Ok(s) => {
            println!("{}: {} rows, {} flagged -> {}", kind.as_str(), s.rows, s.flagged_rows, s.csv_path.display());
            if s.flagged_rows > 0 {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => exit_for(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Thickness(a) => run(ExperimentKind::Thickness, a),
        Command::SpectralSweep(a) => run(ExperimentKind::SpectralSweep, a),
        Command::ObsEstimate(a) => run(ExperimentKind::ObsEstimate, a),
        Command::Interpolation(a) => run(ExperimentKind::Interpolation, a),
        Command::Counterexample(a) => run(ExperimentKind::Counterexample, a),
        Command::ConstantsChain(a) => run(ExperimentKind::ConstantsChain, a),
        Command::Audit(a) => run(ExperimentKind::Audit, a),
        Command::PlotData { report, out } => match emit_plot_data(&report, &out) {
            Ok(p) => {
                println!("{}", p.display());
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
    }
}
