use std::fmt;

use nsch::checkpoint::CheckpointError;
use nsch::config::ConfigError;
use nsch::presets::PresetError;
use nsch::{SolverError, StepError};

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Checkpoint(String),
    Numeric(String),
    Verify(String),
    Solver(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Checkpoint(_) => 4,
            Self::Numeric(_) => 5,
            Self::Verify(_) => 6,
            Self::Solver(_) => 7,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (class, msg) = match self {
            Self::Config(m) => ("configuration", m),
            Self::Io(m) => ("i/o", m),
            Self::Checkpoint(m) => ("checkpoint", m),
            Self::Numeric(m) => ("numerical failure", m),
            Self::Verify(m) => ("verification failed", m),
            Self::Solver(m) => ("solver", m),
        };
        write!(f, "{class}: {msg}")
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Self::Checkpoint(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        Self::Solver(e.to_string())
    }
}

impl From<StepError> for Failure {
    fn from(e: StepError) -> Self {
        match e {
            StepError::Solver(s) => Self::Solver(s.to_string()),
            other => Self::Numeric(other.to_string()),
        }
    }
}

impl From<PresetError> for Failure {
    fn from(e: PresetError) -> Self {
        match e {
            PresetError::Init(nsch::galerkin::InitError::Solver(s)) => Self::Solver(s.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<nsch::ParameterError> for Failure {
    fn from(e: nsch::ParameterError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<nsch::LayoutError> for Failure {
    fn from(e: nsch::LayoutError) -> Self {
        Self::Config(e.to_string())
    }
}
