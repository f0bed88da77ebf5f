//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Binomial/basis counts that do not fit the platform word size.
    #[error("monomial count overflow: C({n}+{d}, {d}) exceeds usize")]
    BasisOverflow { n: usize, d: u32 },

    /// Mixing polynomials over different variable lists.
    #[error("variable count mismatch: {left} vs {right}")]
    VariableMismatch { left: usize, right: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid relaxation config: {0}")]
    InvalidConfig(String),

    /// Relaxation degree too small to admit any test function for one of
    /// the weak-form equations.
    #[error("relaxation degree {degree} admits no test function for equation {equation}")]
    DegreeTooSmall { equation: &'static str, degree: u32 },

    /// Controller-form degree budget violated by the requested extraction.
    #[error("degree budget violated: {0}")]
    DegreeBudget(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }
}
