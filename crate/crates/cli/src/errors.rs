//! Exit-code discipline: 0 success, 2 input error, 3 numerical failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad input data or configuration (exit code 2).
    Input(String),
    /// The numerics failed on valid input (exit code 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pense::Error> for CliError {
    fn from(e: pense::Error) -> Self {
        match e {
            pense::Error::InvalidArgument(_)
            | pense::Error::KTooLarge { .. }
            | pense::Error::EmptyErrors => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
