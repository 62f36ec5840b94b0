use std::fmt;
use std::process::ExitCode;

/// Usage/config problems exit 2, failures inside a pipeline stage exit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Stage,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(stage: &'static str, msg: impl fmt::Display) -> Self {
        Self {
            kind: Failure::Usage,
            stage,
            source: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn stage(stage: &'static str, msg: impl fmt::Display) -> Self {
        Self {
            kind: Failure::Stage,
            stage,
            source: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self.kind {
            Failure::Usage => ExitCode::from(2),
            Failure::Stage => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.stage, self.source)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait StageExt<T> {
    /// Tags an error as a failure of `stage` (exit 1).
    fn in_stage(self, stage: &'static str) -> CliResult<T>;
    /// Tags an error as bad input or configuration for `stage` (exit 2).
    fn bad_input(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn in_stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: Failure::Stage,
            stage,
            source: e.into(),
        })
    }

    fn bad_input(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind: Failure::Usage,
            stage,
            source: e.into(),
        })
    }
}
