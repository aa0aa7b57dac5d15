use thiserror::Error;

/// Errors from the dense kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix is singular to working precision (pivot {pivot:.3e} below {threshold:.3e} at column {column})")]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("stationary solve produced an invalid distribution (min entry {min:.3e}, residual {residual:.3e})")]
    InvalidStationary { min: f64, residual: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} row {row} is not a probability vector (sum {sum}, min {min})")]
    NotStochastic {
        what: &'static str,
        row: usize,
        sum: f64,
        min: f64,
    },
    #[error("{what} contains a non-finite value at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("induced chain is not unichain ({closed_classes} closed classes)")]
    NotUnichain { closed_classes: usize },
    #[error("induced chain is periodic (period {period})")]
    Periodic { period: usize },
    #[error("discounted chain is not irreducible: {unreachable} states unreachable from the initial distribution")]
    NotIrreducible { unreachable: usize },
    #[error("internal consistency check failed for {what}: gap {gap:.3e} exceeds {tolerance:.1e}")]
    Inconsistent {
        what: &'static str,
        gap: f64,
        tolerance: f64,
    },
    #[error("no minorization power found up to ell = {cap}")]
    NoMinorization { cap: usize },
    #[error("tightness witness infeasible: no row has mass {needed} in column {column}")]
    WitnessInfeasible { column: usize, needed: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
