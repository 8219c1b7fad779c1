use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{0} contains non-finite values")]
    NonFinite(&'static str),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("row {row} is not a normalized distribution (sum of probabilities {sum})")]
    NotNormalized { row: usize, sum: f64 },
    #[error("index {index} out of range for size {bound}")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("target sequence has zero probability")]
    ZeroProbability,
    #[error("reference signal has zero norm")]
    ZeroReference,
    #[error("brute-force guard exceeded: {0}")]
    GuardExceeded(String),
    #[error("lyric span {0} starts before its predecessor")]
    UnsortedSpans(usize),
    #[error("lyric spans {0} and {1} overlap")]
    OverlappingSpans(usize, usize),
    #[error("track lengths differ: vocal {vocal}, accompaniment {accomp}")]
    LengthMismatch { vocal: usize, accomp: usize },
    #[error("token rates differ: vocal {vocal}, accompaniment {accomp}")]
    RateMismatch { vocal: f64, accomp: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
