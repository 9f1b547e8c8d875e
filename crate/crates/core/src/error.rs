use thiserror::Error;

/// Errors raised by the simulation and design toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("field exponent {0} unsupported (need 2 <= p <= 8)")]
    UnsupportedExponent(u32),

    #[error("polynomial {poly:#b} is not primitive of degree {p}")]
    NonPrimitivePolynomial { p: u32, poly: u32 },

    #[error("edge label must be nonzero")]
    ZeroLabel,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("base matrix entry {entry} at ({row}, {col}) exceeds lifting factor {lifting}")]
    InfeasibleExpansion {
        row: usize,
        col: usize,
        entry: u32,
        lifting: usize,
    },

    #[error("phase grid with {levels} levels is not a multiple of modulation order {order}")]
    GridMismatch { levels: usize, order: usize },

    #[error("no threshold bracket in [{low_db}, {high_db}] dB")]
    NonConvergent { low_db: f64, high_db: f64 },

    #[error("all refinement candidates show an error floor above the target")]
    Exhausted,

    #[error("invalid mapping: {0}")]
    InvalidMapping(String),

    #[error("invalid base matrix: {0}")]
    InvalidBaseMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("output failed: {0}")]
    Output(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
