use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("numerical result inconclusive: {0}")]
    Inconclusive(String),

    #[error("sampler exceeded retry budget of {budget} draws ({context})")]
    RetryBudget { budget: usize, context: String },

    #[error("Haar PX-DA does not exist for this mixing density and prior: {0}")]
    HaarNonexistent(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("grid too small: boundary mass {boundary_mass:e} exceeds 1e-6; {suggestion}")]
    GridTooSmall { boundary_mass: f64, suggestion: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
