//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation received an empty matrix or vector.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A value failed domain validation (non-finite entry, bad weight, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Per-class marginal mass differs between the two sides.
    #[error("class imbalance: class {class} has mass {mass_a} vs {mass_b} (gap {gap:.3e} > tol {tol:.3e})")]
    ClassImbalance {
        class: usize,
        mass_a: f64,
        mass_b: f64,
        gap: f64,
        tol: f64,
    },

    /// A mask leaves some row or column with no admissible entry.
    #[error("infeasible mask: {0}")]
    InfeasibleMask(String),

    /// The exact oracle only handles small instances.
    #[error("oracle size limit: n = {0} exceeds 8")]
    OracleSizeLimit(usize),

    /// A transport plan row carries no mass, so no match distribution exists.
    #[error("unmatched sample: row {0} of the transport plan sums to zero")]
    UnmatchedSample(usize),

    /// A zero-norm row makes the cosine objective undefined.
    #[error("degenerate direction: row {row} of {which} has zero norm")]
    DegenerateDirection { row: usize, which: &'static str },

    /// A feature plan column carries no mass, so barycentric weights are undefined.
    #[error("degenerate feature coupling: column {0} of the feature plan sums to zero")]
    DegenerateFeatureCoupling(usize),

    /// Configuration file or CLI parameter failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Text-format parse failure (matrix, label, or checkpoint file).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for validation failures, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
