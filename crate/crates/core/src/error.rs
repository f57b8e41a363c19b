//! Error type shared by all modules in this crate.

use std::fmt;

/// Errors produced by tensor ops, layers, model construction and file I/O.
#[derive(Debug)]
pub enum Error {
    /// Two tensors that must agree in shape do not.
    ShapeMismatch {
        context: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A reduction axis is out of range or repeated.
    InvalidAxis { axis: usize, rank: usize },
    /// A network spec failed validation; the message names the failing layer.
    InvalidSpec(String),
    /// Transposed-convolution geometry is inconsistent with its input.
    Geometry(String),
    /// A metric is undefined on the given inputs (e.g. no positive labels).
    Metric(String),
    /// Malformed file contents (image, checkpoint, manifest).
    Format(String),
    /// Invalid configuration value.
    Config(String),
    /// Non-finite value where the pipeline requires finite arithmetic.
    Numeric(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                left,
                right,
            } => write!(f, "{context}: shape mismatch {left:?} vs {right:?}"),
            Error::InvalidAxis { axis, rank } => {
                write!(f, "axis {axis} out of range for rank-{rank} tensor")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid network spec: {msg}"),
            Error::Geometry(msg) => write!(f, "inconsistent deconvolution geometry: {msg}"),
            Error::Metric(msg) => write!(f, "metric undefined: {msg}"),
            Error::Format(msg) => write!(f, "malformed file: {msg}"),
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
