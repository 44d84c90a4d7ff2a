use thiserror::Error;

use crate::lattice::Domain;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid frame parameters: {0}")]
    InvalidParams(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("grid domain mismatch: expected {expected:?}, got {actual:?}")]
    DomainMismatch { expected: Domain, actual: Domain },

    #[error("index ({row}, {col}) outside {rows}x{cols} grid")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{quantity} = {value:e} outside unambiguous range [{min:e}, {max:e})")]
    Ambiguous {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("paths {first} and {second} are not resolvable in delay or Doppler")]
    Unresolvable { first: usize, second: usize },

    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("unsupported QAM order {0} (expected 4, 16 or 64)")]
    UnsupportedOrder(usize),

    #[error("singular channel-coefficient estimate (zero denominator)")]
    SingularEstimate,

    #[error("no pilot energy: sigma_p2 must be positive for pilot-aided estimation")]
    NoPilot,

    #[error("SINR model breakdown: {0}")]
    ModelBreakdown(String),

    #[error("signal has zero power")]
    ZeroSignal,

    #[error("geometry is degenerate: {0}")]
    DegenerateGeometry(String),

    #[error("dense construction limited to {limit} samples, requested {requested}")]
    SizeGuard { limit: usize, requested: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
