use std::fmt;

/// Failure classes of the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or missing inputs: exit 2.
    Usage(String),
    /// Filesystem failure: exit 3.
    Io(String),
    /// Simulation or analysis failure: exit 4.
    Analysis(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Analysis(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<photodyn_core::Error> for CliError {
    fn from(e: photodyn_core::Error) -> Self {
        use photodyn_core::Error as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            E::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
