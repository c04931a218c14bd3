use thiserror::Error;

/// Errors raised by model construction, solvers, codecs and simulations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CavcError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("kernel row ({x}, {s}) sums to {sum}, expected 1")]
    NotStochastic { x: usize, s: usize, sum: f64 },

    #[error("kernel entry ({x}, {s}, {y}) = {value} is outside [0, 1]")]
    EntryOutOfRange {
        x: usize,
        s: usize,
        y: usize,
        value: f64,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("symbol {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("axis groups overlap on axis {0}")]
    OverlappingAxes(usize),

    #[error("solver failed to converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("enumeration budget exceeded: {needed} terms needed, budget is {budget} ({what})")]
    BudgetExceeded {
        needed: f64,
        budget: f64,
        what: String,
    },

    #[error("type is not realizable at length {n}; closest realizable counts are {closest:?}")]
    Unrealizable { n: usize, closest: Vec<usize> },

    #[error("witness is not feasible: residual {residual} exceeds tolerance {tol}")]
    InfeasibleWitness { residual: f64, tol: f64 },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trial {index}: {source}")]
    Trial { index: usize, source: Box<CavcError> },
}

pub type Result<T> = std::result::Result<T, CavcError>;
