use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. Each error path has its own.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad command-line usage (reported by the argument parser).
    pub const USAGE: u8 = 2;
    pub const MISSING_FILE: u8 = 3;
    pub const SCHEMA: u8 = 4;
    pub const SIMULATION: u8 = 5;
    pub const UNKNOWN_BASELINE: u8 = 6;
    pub const EMPTY_SWEEP: u8 = 7;
    pub const OUTPUT: u8 = 8;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {reason}")]
    MissingFile { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Schema {
        context: String,
        source: chipsim::Error,
    },

    #[error("simulation failed: {0}")]
    Simulation(chipsim::Error),

    #[error("unknown baseline `{name}` (known: {known})")]
    UnknownBaseline { name: String, known: String },

    #[error("nothing to do: {0} is empty")]
    EmptySweep(&'static str),

    #[error("cannot write {path}: {reason}")]
    Output { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingFile { .. } => exit::MISSING_FILE,
            CliError::Schema { .. } => exit::SCHEMA,
            CliError::Simulation(_) => exit::SIMULATION,
            CliError::UnknownBaseline { .. } => exit::UNKNOWN_BASELINE,
            CliError::EmptySweep(_) => exit::EMPTY_SWEEP,
            CliError::Output { .. } => exit::OUTPUT,
        }
    }

    pub fn schema(context: impl Into<String>, source: chipsim::Error) -> Self {
        CliError::Schema {
            context: context.into(),
            source,
        }
    }
}

/// Config mistakes are schema errors, everything else comes from running the
/// model.
impl From<chipsim::Error> for CliError {
    fn from(e: chipsim::Error) -> Self {
        use chipsim::Error as E;
        match e {
            E::InvalidField { .. } | E::Parse(_) | E::UnknownPreset(_) => {
                CliError::schema("invalid input", e)
            }
            other => CliError::Simulation(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
