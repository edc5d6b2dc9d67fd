use std::fmt;

/// Failure of one CLI invocation, mapped onto the documented exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Schema violation or invalid input (exit 2).
    Config(String),
    /// The numerics failed (exit 3).
    Numerical(magconc::Error),
    /// A built-in check on the results failed (exit 3).
    Check(String),
    /// Could not write outputs (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Check(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Numerical(e) => write!(f, "{e}"),
            CliError::Check(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<magconc::Error> for CliError {
    fn from(e: magconc::Error) -> Self {
        use magconc::Error::*;
        match e {
            InvalidInput(_) | NonSubcritical { .. } | UnknownPreset(_) | MissingParam { .. } | BadGeometry(_) => {
                CliError::Config(e.to_string())
            }
            Json(_) => CliError::Config(e.to_string()),
            Io(err) => CliError::Io(err.to_string()),
            Format(m) => CliError::Io(m),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
