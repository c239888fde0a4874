use std::io;

use thiserror::Error;

/// Errors produced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} out of range: {what}")]
    Range { what: &'static str, value: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("encoding error: expected {expected}")]
    Encoding { expected: &'static str },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("numeric error{}: {message}", block.map(|b| format!(" in block {b}")).unwrap_or_default())]
    Numeric {
        block: Option<usize>,
        message: String,
    },

    #[error("singular matrix (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("training diverged at step {step}; model restored to step {last_good_step}")]
    Diverged { step: usize, last_good_step: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn numeric(block: Option<usize>, message: impl Into<String>) -> Self {
        Error::Numeric {
            block,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
