use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid material parameter: {0}")]
    InvalidMaterial(String),

    /// A quadratic form of the composite (mass or stiffness) is not positive definite.
    #[error("{form} form is not positive definite (determinant {value:e})")]
    NotPositiveDefinite { form: &'static str, value: f64 },

    #[error("invalid approximation order N = {0}")]
    InvalidOrder(usize),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("eigensolver did not converge (n = {n}, max iterations {max_iterations})")]
    EigenNoConvergence { n: usize, max_iterations: usize },

    #[error("Krylov column {column} is not finite; run the rank test with column scaling")]
    KrylovOverflow { column: usize },

    #[error("state dimension {n} exceeds the supported limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("midpoint system I - dt/2 A is singular (dt = {dt}, condition estimate {condition:e})")]
    StepFailure { dt: f64, condition: f64 },

    #[error("state ordering mismatch: {0}")]
    Ordering(String),

    #[error("snapshot provenance {snapshot} does not match model {model}")]
    Provenance { snapshot: String, model: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration problem; `key` names the offending entry when known.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
