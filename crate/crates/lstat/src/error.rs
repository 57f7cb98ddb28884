//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by statistics, calibration, simulation and data loading.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("sample too small: need at least {needed} observations, have {have}")]
    SampleTooSmall { needed: usize, have: usize },

    #[error("dimension {p} too small for the default k-grid (need p >= 40); supply an explicit grid")]
    DimensionTooSmall { p: usize },

    #[error("column {index} is degenerate (sample variance {variance} <= 0)")]
    DegenerateColumn { index: usize, variance: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("k = {k} outside 1..={p}")]
    KOutOfRange { k: usize, p: usize },

    #[error("k = {k} is not in the bootstrap grid {grid:?}")]
    KNotInGrid { k: usize, grid: Vec<usize> },

    #[error("invalid k-grid: {0}")]
    InvalidGrid(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("weights do not match p-values: {pvals} p-values, {weights} weights")]
    WeightMismatch { pvals: usize, weights: usize },

    #[error("p-value {0} on the boundary of (0, 1); clamp before combining")]
    BoundaryPValue(f64),

    #[error("unknown test name: {0}")]
    UnknownTest(String),

    #[error("covariance factor is not positive definite (min eigenvalue {min_eig})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("series is degenerate (zero variance)")]
    DegenerateSeries,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dates misaligned: {0}")]
    MisalignedDates(String),

    #[error("no overlapping dates between returns and risk-free series")]
    EmptyIntersection,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
