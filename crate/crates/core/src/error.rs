use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A record failed its invariants (non-finite value, negative cost, ...).
    Validation(String),
    /// Vector or tensor shapes do not line up.
    DimensionMismatch { expected: usize, got: usize },
    /// Replay buffer has nothing to sample from.
    EmptyBuffer,
    /// Diffusion step index outside `1..=K`.
    StepOutOfRange { step: usize, max: usize },
    UnknownEnv(String),
    /// `step` called on an episode that already finished.
    EpisodeDone,
    InvalidParameter(String),
    /// An energy evaluation produced NaN or infinity for Monte-Carlo sample `index`.
    NonFiniteEnergy { index: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation failed: {msg}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::EmptyBuffer => f.write_str("cannot sample from an empty replay buffer"),
            Error::StepOutOfRange { step, max } => {
                write!(f, "diffusion step {step} outside 1..={max}")
            }
            Error::UnknownEnv(name) => write!(f, "unknown environment `{name}`"),
            Error::EpisodeDone => f.write_str("step called after the episode finished"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonFiniteEnergy { index } => {
                write!(f, "non-finite energy at Monte-Carlo sample {index}")
            }
        }
    }
}

impl core::error::Error for Error {}
