use std::fmt;

use bart_core::BartError;

/// Process exit codes, following the BSD sysexits convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 64,
    Data = 65,
    Model = 66,
    Internal = 70,
}

impl ExitKind {
    pub fn label(self) -> &'static str {
        match self {
            ExitKind::Usage => "usage",
            ExitKind::Data => "data",
            ExitKind::Model => "model",
            ExitKind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Usage, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Data, message: msg.into() }
    }

    pub fn model(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Model, message: msg.into() }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError { kind: ExitKind::Internal, message: msg.into() }
    }

    /// The single stderr line printed on failure.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": { "code": self.kind as i32, "kind": self.kind.label(), "message": self.message }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<BartError> for CliError {
    fn from(e: BartError) -> Self {
        let kind = match &e {
            BartError::InvalidArgument(_) => ExitKind::Usage,
            BartError::Io { .. }
            | BartError::Csv(_)
            | BartError::MissingResponse(_)
            | BartError::MissingResponseValue { .. }
            | BartError::Data(_) => ExitKind::Data,
            BartError::VersionMismatch { .. } | BartError::CorruptArchive(_) | BartError::Unsupported(_) => ExitKind::Model,
            BartError::Infeasible(_) | BartError::Invariant(_) => ExitKind::Internal,
        };
        CliError { kind, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
