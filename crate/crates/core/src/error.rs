use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unsupported ambient dimension {0} (at most {max})", max = crate::gf2::MAX_DIM)]
    AmbientTooLarge(usize),

    /// The operation is undefined on the given value (for instance the empty subspace).
    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("samples exhausted after {consumed} steps at layer {layer} before reaching a leaf")]
    PathIncomplete { consumed: usize, layer: usize },

    #[error("resource budget exceeded: {what} needs {needed}, budget is {budget}")]
    Budget { what: &'static str, needed: u128, budget: u128 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("memory bound violated: state uses {used} bits, bound is {bound}")]
    MemoryBound { used: usize, bound: usize },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
