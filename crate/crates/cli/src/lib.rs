//! The `urbancause` pipeline: each stage reads the previous stage's files
//! from the output directory and writes its own.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{resolve, Overrides, Resolved, RunConfig};
pub use error::CliError;

/// Pipeline stages in run order.
pub const STAGES: [&str; 5] = ["synth", "discover", "effects", "predict", "report"];

pub fn run(stage: &str, overrides: &Overrides) -> Result<(), CliError> {
    let run = resolve(overrides)?;
    let f = match stage {
        "synth" => commands::synth,
        "discover" => commands::discover,
        "effects" => commands::effects,
        "predict" => commands::predict,
        "report" => commands::report,
        other => return Err(CliError::Validation(format!("unknown command {other}"))),
    };
    commands::run_stage(stage, &run, f)
}
