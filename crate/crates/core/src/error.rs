use thiserror::Error;

/// Errors raised by the core library.
///
/// States, rows and columns are reported 0-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is empty")]
    Empty,

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time {t} exceeds the sequence horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },

    #[error("time {t} exceeds the window length {window}")]
    HorizonExceedsWindow { t: usize, window: usize },

    #[error("window length {window} is shorter than the horizon {horizon}")]
    WindowTooShort { window: usize, horizon: usize },

    #[error("size {size} exceeds the configured cap {cap}")]
    SizeGuardExceeded { size: u128, cap: u128 },

    #[error("enumeration of {count} assignments exceeds the cap {cap}")]
    SupportExplosion { count: u128, cap: u128 },

    #[error("residual did not vanish after {iterations} greedy steps")]
    NonConvergence { iterations: usize },

    #[error("state {state} is outside 0..{n}")]
    InvalidState { state: usize, n: usize },

    #[error("label {label} is outside the label set of size {size}")]
    InvalidLabel { label: usize, size: usize },

    #[error("duplicate deterministic map in label set at position {0}")]
    DuplicateLabel(usize),

    #[error("the label set has no entry for map {0:?}")]
    MissingLabel(Vec<usize>),

    #[error("invalid probability law: {0}")]
    InvalidLaw(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("decomposition does not reproduce the matrix (max deviation {deviation:e})")]
    DecompositionMismatch { deviation: f64 },

    #[error("coupling table is not a bijection: {0}")]
    NotBijective(String),

    #[error("a sequence needs at least one matrix")]
    EmptySequence,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
