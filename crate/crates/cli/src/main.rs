use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use urban_causal_cli::Overrides;

#[derive(Parser)]
#[command(name = "urbancause", version, about = "Causal discovery, effect estimation and causal feature selection for regional factor tables")]
struct Cli {
    /// Run config (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use raw factor values instead of z-scores.
    #[arg(long, global = true)]
    no_standardize: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic table from a preset or inline SEM.
    Synth,
    /// Search for a causal DAG over the table.
    Discover,
    /// Estimate the effect of every edge of the discovered graph.
    Effects,
    /// Run the training-size prediction experiment.
    Predict,
    /// Merge stage outputs into summary.md and summary.csv.
    Report,
}

fn main() -> ExitCode {
    // Usage errors are validation errors (1); clap's own code 2 is reserved
    // here for missing stage outputs.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let stage = match cli.command {
        Command::Synth => "synth",
        Command::Discover => "discover",
        Command::Effects => "effects",
        Command::Predict => "predict",
        Command::Report => "report",
    };
    let overrides = Overrides {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        no_standardize: cli.no_standardize,
    };
    match urban_causal_cli::run(stage, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
