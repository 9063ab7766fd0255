use serde::Serialize;
use thiserror::Error;

use crate::config::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration ({} diagnostic(s))", .0.len())]
    Config(Vec<Diagnostic>),

    #[error(transparent)]
    Numeric(#[from] thinsets::Error),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

/// Machine-readable error written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorDoc {
    pub kind: &'static str,
    pub exit_code: u8,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(thinsets::Error::ZeroAcceptance { .. } | thinsets::Error::ZeroProbability) => 4,
            CliError::Numeric(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }

    pub fn doc(&self) -> ErrorDoc {
        let (kind, diagnostics) = match self {
            CliError::Config(d) => ("config", d.clone()),
            CliError::Numeric(thinsets::Error::ZeroAcceptance { .. } | thinsets::Error::ZeroProbability) => {
                ("zero_acceptance", Vec::new())
            }
            CliError::Numeric(_) => ("numeric", Vec::new()),
            CliError::Io(_) | CliError::Csv(_) => ("io", Vec::new()),
        };
        ErrorDoc {
            kind,
            exit_code: self.exit_code(),
            message: self.to_string(),
            diagnostics,
        }
    }
}
