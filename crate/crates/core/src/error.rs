use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmvError {
    /// An input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    /// Floating-point breakdown (vanishing denominator, solver failure, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Evaluation point too close to an atom of a pure-point measure.
    #[error("evaluation at {theta} lies within {distance:e} of the eigenphase {phase}")]
    Singularity {
        theta: f64,
        phase: f64,
        distance: f64,
    },

    #[error("quadrature did not converge: last estimate {last}, previous {previous}")]
    Convergence { last: f64, previous: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    /// An internal consistency check failed. Indicates a bug rather than bad input.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Wraps an error raised while processing one Monte Carlo sample.
    #[error("sample {index}: {source}")]
    Sample {
        index: u64,
        #[source]
        source: Box<CmvError>,
    },
}

pub type Result<T> = std::result::Result<T, CmvError>;
