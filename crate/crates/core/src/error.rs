use std::io;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyInput,
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stage mismatch: {0}")]
    StageMismatch(String),
    #[error("missing predicted labels")]
    MissingPredictions,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
