use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point is not in front of the pinhole (z = {z})")]
    BehindCamera { z: f64 },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("value {value} at tile ({k}, {j}) is outside the alphabet 0..{levels}")]
    OutOfAlphabet {
        value: f64,
        k: usize,
        j: usize,
        levels: usize,
    },

    #[error("tile ({k}, {j}) has zero focal-plane area")]
    ZeroTileArea { k: usize, j: usize },

    #[error("distribution is not normalized (total mass {total})")]
    NotNormalized { total: f64 },

    #[error("candidate list is empty")]
    NoCandidates,

    #[error("weight matrix must contain at least one positive entry")]
    DegenerateWeights,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
