use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },

    #[error("channel error: {0}")]
    Channel(&'static str),

    #[error("level index {index} out of range for pyramid of {levels} levels")]
    LevelIndex { index: usize, levels: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("model `{model}` failed: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate saliency map (constant values)")]
    DegenerateMap,

    #[error("no fixations")]
    NoFixation,

    #[error("every pixel is fixated; no negatives for ROC")]
    UndefinedNegative,

    #[error("shuffle set has no locations outside the fixated pixels")]
    EmptyNegative,

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabel(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
