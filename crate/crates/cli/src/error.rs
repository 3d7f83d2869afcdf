use std::fmt;
use std::process::ExitCode;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration file.
    Usage(String),
    /// Missing, malformed or inconsistent input data.
    Data(String),
    /// Anything that went wrong while running: I/O, network, the bot API.
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<propwatch_core::Error> for CliError {
    fn from(e: propwatch_core::Error) -> Self {
        match e {
            propwatch_core::Error::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<propwatch_modbot::Error> for CliError {
    fn from(e: propwatch_modbot::Error) -> Self {
        use propwatch_modbot::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Config(m) => CliError::Usage(format!("bot configuration: {m}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
