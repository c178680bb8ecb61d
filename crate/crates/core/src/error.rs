use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are split between input/contract errors and numerical
/// infeasibility so front ends can map them to distinct exit statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: label out of range: {label} not in 1..={nclasses}")]
    LabelOutOfRange {
        line: usize,
        label: i64,
        nclasses: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("class {class} out of range 1..={nclasses}")]
    ClassOutOfRange { class: usize, nclasses: usize },

    #[error("class {0} is absent from the grid")]
    AbsentClass(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distance {h} lies outside the sampled range [{lo}, {hi}]")]
    OutOfRange { h: f64, lo: f64, hi: f64 },

    #[error("not evaluable: {0}")]
    NotEvaluable(String),

    #[error("non-physical value: {0}")]
    NonPhysical(String),

    #[error("corrupt curve input: {0}")]
    CorruptCurve(String),

    #[error("numerically infeasible: {0}")]
    Infeasible(String),

    #[error("circulant embedding is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    EmbeddingNotPsd { min_eigenvalue: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::EmbeddingNotPsd { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
