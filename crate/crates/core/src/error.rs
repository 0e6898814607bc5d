use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("{what}: eigen iteration did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid Dirichlet datum: {0}")]
    InvalidDatum(String),

    #[error(
        "smallness condition violated: alpha_jnu * c0^2 * c3^2 = {product:.6} >= 1 \
         (alpha_jnu = {alpha_jnu}, c0 = {c0:.6}, c3 = {c3:.6})"
    )]
    SmallnessViolated {
        product: f64,
        alpha_jnu: f64,
        c0: f64,
        c3: f64,
    },

    #[error("missing penalty law: {0}")]
    MissingPenaltyLaw(&'static str),

    #[error("penalty operator requested in exact mode")]
    ExactModeHasNoPenalty,

    #[error("outer iteration did not converge in {iterations} iterations (last increment {last_increment:e})")]
    NonConvergence {
        iterations: usize,
        last_increment: f64,
        contraction_history: Vec<f64>,
    },

    #[error("inner solver failed at outer iteration {outer}: {reason}")]
    InnerSolver { outer: usize, reason: String },

    #[error("oracle inconsistency: {0}")]
    Oracle(String),

    #[error("solve failed at sequence index {index}: {source}")]
    Sequence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {starts} optimizer starts failed; first failure: {first}")]
    AllStartsFailed { starts: usize, first: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
