use bayes_cfme::CfmeError;
use thiserror::Error;

/// Failure of a subcommand, mapped to a documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub const INPUT: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => Self::INPUT,
            CliError::Numerical(_) => Self::NUMERICAL,
            CliError::Io(_) => Self::IO,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<CfmeError> for CliError {
    fn from(e: CfmeError) -> Self {
        match e {
            CfmeError::InvalidInput(msg) => CliError::Input(msg),
            CfmeError::Numerical(n) => CliError::Numerical(n.to_string()),
        }
    }
}
