//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {required} samples, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("window {window} out of range for series of length {len}")]
    WindowOutOfRange { window: usize, len: usize },

    #[error("cannot normalize a series with zero scale")]
    ZeroVariance,

    #[error("non-positive price at index {index}: {value}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("timestamps not strictly increasing at index {index}")]
    NonMonotonicTimestamps { index: usize },

    #[error("non-uniform sample spacing at row {row}: step {step}, expected {expected}")]
    NonUniformGrid { row: usize, step: f64, expected: f64 },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("simulation produced non-finite state at internal step {step}")]
    NonFiniteState { step: u64 },

    #[error("duration {duration} too short: need at least {min}")]
    DurationTooShort { duration: f64, min: f64 },

    #[error("Bessel order {nu} below -1/2 is unsupported")]
    UnsupportedBesselOrder { nu: f64 },

    #[error("insufficient data: need {required}, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("mixed duration kinds: {left} pooled with {right}")]
    KindMismatch {
        left: &'static str,
        right: &'static str,
    },

    #[error("requested size {n} exceeds the memory budget of {max} samples")]
    TooLarge { n: usize, max: usize },

    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("report validation failed: {0}")]
    ReportSchema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
