use thiserror::Error;

/// Errors produced by the leakage toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Adaptive quadrature ran out of subdivisions before reaching the
    /// requested tolerance.
    #[error("accuracy not reached: requested {requested:e}, achieved {achieved:e}")]
    Accuracy { requested: f64, achieved: f64 },

    #[error("resource limit: {what} would produce {count} items (cap {cap})")]
    Resource {
        what: &'static str,
        count: u128,
        cap: u128,
    },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
