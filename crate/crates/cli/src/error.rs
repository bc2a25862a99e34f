use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Singular(String),

    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Singular(_) => ExitCode::from(3),
            CliError::Run(_) => ExitCode::from(1),
        }
    }
}

impl From<qtransistor::Error> for CliError {
    fn from(e: qtransistor::Error) -> Self {
        use qtransistor::Error as E;
        match e {
            E::SingularMatrix(_) => CliError::Singular(e.to_string()),
            E::InvalidParams(_)
            | E::InvalidCoherence { .. }
            | E::InvalidDimension(_)
            | E::UnknownCouplerState(_)
            | E::InvalidSchedule(_) => CliError::Config(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("i/o error: {e}"))
    }
}
