use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A size or dimension precondition was violated (for example `k >= d`).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter lies outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A time argument lies outside the diffusion horizon.
    #[error("time {t} outside the schedule domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    /// A network or field was configured inconsistently.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values appeared in a score column.
    #[error("non-finite score in column {column}")]
    NonFiniteScore { column: usize },

    /// Every singular value is equal, so no gap can be located.
    #[error("degenerate spectrum: all {len} singular values are equal")]
    DegenerateSpectrum { len: usize },

    /// Training produced a non-finite or exploding loss.
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64, trace: Vec<f64> },

    /// A geometric quantity is undefined (zero vector where a direction is needed).
    #[error("undefined: {0}")]
    Undefined(String),

    /// A numerical routine failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
