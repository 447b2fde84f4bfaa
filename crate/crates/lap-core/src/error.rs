//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

use crate::tensor::Shape;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors surfaced by tensor, layer, network, and metric operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tensor shapes that had to agree (or broadcast) did not.
    ShapeMismatch { expected: Shape, got: Shape },
    /// Channel counts disagree between an input and a parameter set.
    ChannelMismatch { expected: usize, got: usize },
    /// A reduction was requested over a zero-extent axis.
    EmptyReduction,
    /// The raw data length does not match the product of the dims.
    DataLength { expected: usize, got: usize },
    /// Spatial dims are not divisible as the operation requires.
    Indivisible { dim: usize, by: usize },
    /// A configuration value is out of contract.
    InvalidConfig(String),
    /// A numeric result left the finite range.
    NonFinite { context: String },
    /// A metric was asked to aggregate over an empty domain.
    EmptyInput(String),
    /// Comparison against a zero-total baseline.
    ZeroBaseline,
    /// Text parse failure (configs, keypoint records).
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::ChannelMismatch { expected, got } => {
                write!(f, "channel mismatch: expected {expected}, got {got}")
            }
            Error::EmptyReduction => write!(f, "reduction over an empty (zero-extent) domain"),
            Error::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape volume {expected}")
            }
            Error::Indivisible { dim, by } => {
                write!(f, "spatial extent {dim} is not divisible by {by}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::ZeroBaseline => write!(f, "baseline totals are zero"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
