//! Command-line front end: run configuration, dataset loading, formula
//! rendering, and the subcommands.

mod args;
mod commands;
pub mod config;
pub mod data;
pub mod render;

use std::path::PathBuf;

use thiserror::Error;

pub use args::{Cli, Command, RunOverrides};
pub use commands::{
    build_evaluator, build_trainer, cmd_enumerate, cmd_eval, cmd_fuse, cmd_gen_data, cmd_search, execute,
    parse_target, EvalTarget, FuseOutcome, SearchOutcome, FUSE_SAMPLES,
};
pub use config::{DatasetKind, FitnessMode, ModelName, RunConfig};
pub use data::DatasetSource;
pub use render::render_formula;

use crate::bnn::BnnError;
use crate::expr::ExprError;
use crate::fitness::FitnessError;
use crate::ga::GaError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed at byte {offset}: {reason}", .path.display())]
    Format {
        path: PathBuf,
        offset: usize,
        reason: String,
    },
    #[error("cannot parse `{token}` ({reason}); expected {expected}")]
    Target {
        token: String,
        reason: String,
        expected: &'static str,
    },
    #[error("{0}")]
    Refused(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Bnn(#[from] BnnError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InvalidConfig(_) | CliError::Target { .. } | CliError::Refused(_) | CliError::Expr(_) => 2,
            CliError::Fitness(FitnessError::InvalidConfig(_)) | CliError::Ga(GaError::InvalidConfig(_)) => 2,
            _ => 1,
        }
    }
}
