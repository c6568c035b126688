use std::path::Path;

/// Failures of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid configuration; every problem is listed.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub const CONFIG_EXIT: i32 = 2;
    pub const RUNTIME_EXIT: i32 = 3;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::CONFIG_EXIT,
            CliError::Runtime(_) => Self::RUNTIME_EXIT,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{}: {err}", path.display()))
    }
}

impl From<cliplab_core::Error> for CliError {
    fn from(e: cliplab_core::Error) -> Self {
        match e {
            cliplab_core::Error::InvalidConfig(list) => CliError::Config(list),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Fails with every collected problem, if any.
pub fn check(problems: Vec<String>) -> Result<(), CliError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(problems))
    }
}
