use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toric_sim::error::Error;
use toric_sim::runner::{self, DecodeInput, ExperimentKind};

#[derive(Parser)]
#[command(name = "toric-sim", version, about = "Toric-code memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count (also: TORIC_SIM_WORKERS)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build a code lattice and dump its plaquette table
    GenerateLattice(RunArgs),
    /// Static error threshold from parity-curve crossings
    Threshold(RunArgs),
    /// Thermal relaxation dynamics and memory lifetime
    Dynamics(RunArgs),
    /// Coherent single-anyon spreading
    Walk(RunArgs),
    /// CSS capacity bound contour
    Bound(RunArgs),
    /// Decode a serialized code + error vector
    Decode {
        /// JSON file with lattice spec and flipped-spin indices
        #[arg(long)]
        input: PathBuf,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn expected_kind(cmd: &Command) -> Option<ExperimentKind> {
    match cmd {
        Command::GenerateLattice(_) => Some(ExperimentKind::GenerateLattice),
        Command::Threshold(_) => Some(ExperimentKind::StaticThreshold),
        Command::Dynamics(_) => Some(ExperimentKind::Dynamics),
        Command::Walk(_) => Some(ExperimentKind::Walk),
        Command::Bound(_) => Some(ExperimentKind::Bound),
        Command::Decode { .. } => None,
    }
}

fn run_experiment(args: &RunArgs, expected: ExperimentKind) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = runner::parse_config(&text)?;
    if cfg.experiment != expected {
        return Err(Error::Config(format!(
            "config declares experiment '{}' but the '{}' subcommand was invoked",
            cfg.experiment.name(),
            expected.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    } else if let Ok(v) = std::env::var("TORIC_SIM_WORKERS") {
        cfg.workers = v
            .parse()
            .map_err(|_| Error::Config(format!("TORIC_SIM_WORKERS = '{v}' is not a number")))?;
    }
    let manifest = runner::run(&cfg, &args.out)?;
    eprintln!(
        "{}: wrote {} ({}s, manifest {})",
        cfg.experiment.name(),
        manifest.outputs.join(", "),
        manifest.elapsed_seconds,
        manifest.config_hash
    );
    Ok(())
}

fn run_decode(input: &PathBuf, out: &Option<PathBuf>) -> Result<(), Error> {
    let text = std::fs::read_to_string(input)?;
    let parsed: DecodeInput =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let report = runner::decode_report(&parsed)?;
    match out {
        Some(path) => std::fs::write(path, report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decode { input, out } => run_decode(input, out),
        cmd => run_experiment(
            match cmd {
                Command::GenerateLattice(a)
                | Command::Threshold(a)
                | Command::Dynamics(a)
                | Command::Walk(a)
                | Command::Bound(a) => a,
                Command::Decode { .. } => unreachable!(),
            },
            expected_kind(cmd).unwrap(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
