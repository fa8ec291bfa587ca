use std::fmt;
use std::process::ExitCode;

/// Command failure, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: configuration, paths, files, thresholds. Exit code 1.
    Validation(String),
    /// A broken internal invariant or failed self-test. Exit code 2.
    Internal(String),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Failure::Internal(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    pub fn to_exit_code(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }

    /// Prefixes the message, keeping the class.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            Failure::Validation(m) => Failure::Validation(format!("{what}: {m}")),
            Failure::Internal(m) => Failure::Internal(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<dmgdet_core::Error> for Failure {
    fn from(e: dmgdet_core::Error) -> Self {
        use dmgdet_core::Error as E;
        match e {
            E::Shape(_) | E::NonFinite { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;
