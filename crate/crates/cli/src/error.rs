use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Structure(String),
    Other(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Structure(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Structure(m) => write!(f, "structure error: {m}"),
            CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<rsl_core::DataError> for CliError {
    fn from(e: rsl_core::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<rsl_core::ConfigError> for CliError {
    fn from(e: rsl_core::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<rsl_core::BaselineError> for CliError {
    fn from(e: rsl_core::BaselineError) -> Self {
        use rsl_core::BaselineError::*;
        match e {
            UnknownMaterial { .. } | InvalidMaterial(_) | UnknownCriterion { .. } => CliError::Config(e.to_string()),
            _ => CliError::Other(e.into()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
