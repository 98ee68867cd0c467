use bpsre_cli::{run, Config, ExperimentKind, OutputFormat, RunRequest};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bpsre",
    version,
    about = "Simulation laboratory for branching processes in a sparse random environment"
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; overrides config and BPSRE_WORKERS.
    #[arg(long, global = true, env = "BPSRE_WORKERS")]
    workers: Option<usize>,

    /// Output path (default: <experiment>.<ext> in the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Table output format; reports are always JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump raw trajectories as CSV.
    Simulate,
    /// Survival curve P{Z_n > 0} over a generation grid.
    Survival,
    /// Survival of the process observed at its marks.
    EmbeddedSurvival,
    /// Plateau-constant ratio between the direct and embedded curves.
    Ratio,
    /// Conditioned normalized log-population sample at one horizon.
    Yaglom,
    /// Conditioned normalized log-population paths on a time grid.
    FltPaths,
    /// Embedded-law moment identity table.
    EmbedCheck,
    /// Inequality sweeps (binomial tail bound, population-maximum bound).
    Lemmas,
    /// Brownian meander marginal quantiles.
    MeanderRef,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Simulate => ExperimentKind::Simulate,
            Command::Survival => ExperimentKind::Survival,
            Command::EmbeddedSurvival => ExperimentKind::EmbeddedSurvival,
            Command::Ratio => ExperimentKind::Ratio,
            Command::Yaglom => ExperimentKind::Yaglom,
            Command::FltPaths => ExperimentKind::FltPaths,
            Command::EmbedCheck => ExperimentKind::EmbedCheck,
            Command::Lemmas => ExperimentKind::Lemmas,
            Command::MeanderRef => ExperimentKind::MeanderRef,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.command.kind();

    let mut config = match &cli.config {
        Some(path) => match Config::from_file(path) {
            Ok(config) => config,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    let workers = cli
        .workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let format = cli.format.unwrap_or(OutputFormat::Csv);
    let out = cli.out.unwrap_or_else(|| kind.default_out(format));

    let request = RunRequest {
        kind,
        config,
        out,
        format,
        workers,
    };
    match run(&request) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            if summary.all_pass == Some(false) {
                eprintln!("verification reported failures");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
