//! Failure classes, their exit codes and the machine-readable error report.

use std::fmt;
use std::path::Path;

use lmanon_gan::GanError;
use serde::Serialize;

/// Failures the CLI distinguishes by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    MissingInput(String),
    Adapter(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid configuration: {m}"),
            Failure::MissingInput(m) => write!(f, "missing input: {m}"),
            Failure::Adapter(m) => write!(f, "adapter protocol violation: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

pub fn missing_input(path: &Path, err: impl fmt::Display) -> anyhow::Error {
    Failure::MissingInput(format!("{}: {err}", path.display())).into()
}

/// Fails with a missing-input error unless `path` exists.
pub fn require_exists(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing_input(path, "no such file or directory"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Internal,
    InvalidConfig,
    MissingInput,
    AdapterProtocol,
    Checkpoint,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Internal => 1,
            ErrorKind::InvalidConfig => 2,
            ErrorKind::MissingInput => 3,
            ErrorKind::AdapterProtocol => 4,
            ErrorKind::Checkpoint => 5,
            ErrorKind::Numeric => 6,
        }
    }
}

fn core_kind(e: &lmanon_core::Error) -> Option<ErrorKind> {
    match e {
        lmanon_core::Error::Adapter { .. } => Some(ErrorKind::AdapterProtocol),
        lmanon_core::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            Some(ErrorKind::MissingInput)
        }
        lmanon_core::Error::Numeric(_) => Some(ErrorKind::Numeric),
        _ => None,
    }
}

/// Most specific class found along the error chain.
pub fn classify(err: &anyhow::Error) -> ErrorKind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Config(_) => ErrorKind::InvalidConfig,
                Failure::MissingInput(_) => ErrorKind::MissingInput,
                Failure::Adapter(_) => ErrorKind::AdapterProtocol,
            };
        }
        if let Some(g) = cause.downcast_ref::<GanError>() {
            let kind = match g {
                GanError::CheckpointVersion { .. } | GanError::CheckpointFormat(_) => Some(ErrorKind::Checkpoint),
                GanError::Numeric(_) => Some(ErrorKind::Numeric),
                GanError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    Some(ErrorKind::MissingInput)
                }
                GanError::Core(c) => core_kind(c),
                _ => None,
            };
            if let Some(k) = kind {
                return k;
            }
        }
        if let Some(c) = cause.downcast_ref::<lmanon_core::Error>() {
            if let Some(k) = core_kind(c) {
                return k;
            }
        }
    }
    ErrorKind::Internal
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: ErrorKind,
    pub exit_code: i32,
    pub message: String,
    pub causes: Vec<String>,
}

impl ErrorReport {
    pub fn new(err: &anyhow::Error) -> Self {
        let kind = classify(err);
        Self {
            kind,
            exit_code: kind.exit_code(),
            message: err.to_string(),
            causes: err.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}
