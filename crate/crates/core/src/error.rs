use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("singular system in {context}: rank {rank} of {dim}")]
    Singular {
        context: &'static str,
        rank: usize,
        dim: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{operation} is not supported by the {family} family")]
    UnsupportedFamily {
        operation: &'static str,
        family: &'static str,
    },

    #[error("occupancy entry {value:e} below the clamping floor; linear solve is unreliable")]
    NegativeOccupancy { value: f64 },

    #[error("{0}")]
    Parse(String),

    #[error("iteration {iteration}: {cause}")]
    AtIteration {
        iteration: usize,
        cause: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        what,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
