//! Command-line surface over the prompt-optimization library.
//!
//! Every command resolves its configuration as flags > config file >
//! built-in defaults, echoes the resolved values into the run directory,
//! and writes deterministic outputs (timestamps go to the log file only).
//! Exit codes are a stable scripting contract: 0 success, 2 usage or
//! validation failure, 3 numerical failure.

mod commands;
mod runs;

use clap::{Parser, Subcommand};

pub use runs::RunDir;

/// Exit code for usage and validation failures.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for numerical failures (divergence, failed gradient check).
pub const EXIT_NUMERIC: u8 = 3;

/// Environment variable naming the default output root (default "runs").
pub const OUT_ROOT_ENV: &str = "PROMPTGRAD_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "promptgrad",
    version,
    about = "Optimize text-prompt embeddings through a frozen transformer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a fresh base checkpoint on a line corpus.
    Pretrain(commands::PretrainArgs),
    /// Optimize a prompt embedding against a labeled dataset.
    Optimize(commands::OptimizeArgs),
    /// Generate greedily from a prompt (artifact or raw text) plus input.
    Infer(commands::InferArgs),
    /// Evaluate accuracy over a test dataset.
    Eval(commands::EvalArgs),
    /// Diagnostics: entropy, anchoring, activation probing.
    #[command(subcommand)]
    Diag(commands::DiagCommand),
    /// Check backward gradients against central finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Grid sweep over learning rates and epoch counts.
    Sweep(commands::SweepArgs),
    /// Generate a bundled synthetic task (corpus, datasets, stimuli).
    GenTask(commands::GenTaskArgs),
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl From<promptgrad::Error> for CliError {
    fn from(err: promptgrad::Error) -> Self {
        let code = match err {
            promptgrad::Error::Divergence { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

/// Runs one parsed command to completion.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain(args) => commands::pretrain(args),
        Command::Optimize(args) => commands::optimize(args),
        Command::Infer(args) => commands::infer(args),
        Command::Eval(args) => commands::eval(args),
        Command::Diag(cmd) => commands::diag(cmd),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::GenTask(args) => commands::gen_task(args),
    }
}
