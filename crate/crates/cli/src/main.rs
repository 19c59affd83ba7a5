use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use galerkin_fdi::fdi::DecisionKind;
use galerkin_fdi::par::Parallelism;
use galerkin_fdi::pipeline::{self, CheckKind, Pipeline};
use galerkin_fdi::scenario::{FaultSelector, Scenario};
use galerkin_fdi::FdiError;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "galfdi", version, about = "Galerkin/RBF fault detection and isolation for 1-D parabolic PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Assert that no random numbers are drawn and record it in the manifest.
    #[arg(long)]
    seedless: bool,
    /// Run every stage on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Detectability,
    Isolatability,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one mode and write modal and field trajectories.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// none, a trained fault index, test or test:<index>.
        #[arg(long, default_value = "none", value_parser = parse_fault)]
        fault: FaultSelector,
    },
    /// Train all identifiers, estimate xi* and write the weight file.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the FD/FI banks on a simulated run.
    Monitor {
        #[command(flatten)]
        common: Common,
        /// Weight file written by `train` (xi_star.json must sit next to it).
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_fault)]
        fault: FaultSelector,
    },
    /// Evaluate the detectability or isolatability conditions.
    Check {
        #[command(flatten)]
        common: Common,
        /// Without weights the scenario's nominal xi* is used.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long, default_value = "test", value_parser = parse_fault)]
        fault: FaultSelector,
    },
}

fn parse_fault(s: &str) -> Result<FaultSelector, String> {
    s.parse().map_err(|e: FdiError| e.to_string())
}

fn pipeline_for(common: &Common) -> Result<Pipeline, FdiError> {
    if common.seedless && pipeline::USES_RNG {
        return Err(FdiError::config("--seedless", "the pipeline draws random numbers"));
    }
    let scenario = Scenario::load(&common.scenario).map_err(|e| match e {
        FdiError::Io { path, source } => FdiError::config("--scenario", format!("{}: {source}", path.display())),
        other => other,
    })?;
    let par = if common.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    };
    Pipeline::new(scenario, par)
}

fn run(cli: Cli) -> Result<(), FdiError> {
    match cli.command {
        Command::Simulate { common, fault } => {
            let p = pipeline_for(&common)?;
            let manifest = pipeline::cmd_simulate(&p, fault, &common.out, common.seedless)?;
            for o in &manifest.outputs {
                println!("wrote {}", common.out.join(&o.path).display());
            }
        }
        Command::Train { common } => {
            let p = pipeline_for(&common)?;
            let (_, trained) = pipeline::cmd_train(&p, &common.out, common.seedless)?;
            let xi: Vec<String> = trained.xi.xi.iter().map(|v| format!("{v:.4}")).collect();
            println!("xi* = [{}]", xi.join(", "));
            println!("weights: {}", common.out.join(pipeline::WEIGHTS_FILE).display());
        }
        Command::Monitor { common, weights, fault } => {
            let p = pipeline_for(&common)?;
            let (_, mon) = pipeline::cmd_monitor(&p, &weights, fault, &common.out, common.seedless)?;
            for e in &mon.log.events {
                match (e.kind, e.detail.mode) {
                    (DecisionKind::Isolated, Some(l)) => println!("{:?} mode {l} at t = {}", e.kind, e.time),
                    _ => println!("{:?} at t = {}", e.kind, e.time),
                }
            }
        }
        Command::Check {
            common,
            weights,
            which,
            fault,
        } => {
            let p = pipeline_for(&common)?;
            let which = match which {
                Which::Detectability => CheckKind::Detectability,
                Which::Isolatability => CheckKind::Isolatability,
            };
            let (_, report) = pipeline::cmd_check(&p, weights.as_deref(), which, fault, &common.out, common.seedless)?;
            let verdict = report
                .detectability
                .as_ref()
                .map(|r| r.verdict)
                .or(report.isolatability.as_ref().map(|r| r.verdict))
                .unwrap_or(false);
            println!("verdict: {verdict}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else if e.is_divergence() {
                ExitCode::from(EXIT_DIVERGENCE)
            } else {
                ExitCode::from(EXIT_OTHER)
            }
        }
    }
}
