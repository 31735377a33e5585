use std::io::Write;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or inputs the caller must fix; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Failure while doing the work; exit code 2.
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(_) => "runtime",
        }
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Writes results to stdout and errors to stderr, as text or one JSON object.
pub struct Output {
    pub json: bool,
}

impl Output {
    pub fn emit(&self, value: &Value, text: &str) {
        let mut stdout = std::io::stdout().lock();
        let _ = if self.json {
            writeln!(stdout, "{value}")
        } else {
            writeln!(stdout, "{}", text.trim_end())
        };
        let _ = stdout.flush();
    }

    pub fn error(&self, e: &CliError) {
        if self.json {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
        } else {
            eprintln!("error: {e}");
        }
    }
}
