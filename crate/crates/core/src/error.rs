use thiserror::Error;

/// Failure modes shared by every module of the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter combination that can never be valid (bad grid size, ellipticity, family).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs that are well-formed but unusable (non-finite data, mismatched grids).
    #[error("input error: {0}")]
    Input(String),

    /// A query point, ball or rescaling that leaves the computational domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a singular point of a closed-form barrier.
    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// The iterate stopped being finite.
    #[error("numerical blow-up at node ({i}, {j}) after {iteration} iterations")]
    NumericalBlowup {
        i: usize,
        j: usize,
        iteration: usize,
    },

    /// A root-finding step could not bracket its target.
    #[error("bracketing failed: {0}")]
    Bracket(String),

    /// The sparse Newton system could not be factorised.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Too few samples for a geometric fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
