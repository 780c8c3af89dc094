use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An operator or state failed one of its structural invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A model (prior, probe, encoding or weights) is malformed.
    #[error("invalid model: {0}")]
    Model(String),

    /// A preset or operation was called outside its documented domain.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Quantities that must agree with each other do not.
    #[error("inconsistent inputs: {0}")]
    Inconsistency(String),

    /// A computed result failed a post-hoc sanity check (PSD, residual, ...).
    #[error("numerical consistency check failed: {0}")]
    Numerical(String),

    /// Estimators do not commute, so no common eigenbasis exists.
    #[error("incompatible estimators: {0}")]
    Incompatible(String),

    /// The requested computation exceeds the resource budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Every grid point has zero likelihood for the observed outcomes.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    /// A POVM is not positive or not complete.
    #[error("invalid POVM: {0}")]
    Povm(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),
}

impl Error {
    /// Whether this error signals a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Inconsistency(_) | Error::Numerical(_) | Error::DegeneratePosterior(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
