use std::fmt;
use std::process::ExitCode;

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or parameters: exit 2.
    Usage(String),
    /// Solver or fit failure: exit 3.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Numerical(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<rotbec::Error> for Failure {
    fn from(e: rotbec::Error) -> Self {
        use rotbec::Error::*;
        match e {
            InvalidParameter(_) | InvalidInput(_) | GridMismatch(_) | Json(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}
