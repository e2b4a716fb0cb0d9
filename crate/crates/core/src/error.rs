use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time {t} outside of [0, {t_end}]")]
    OutOfDomain { t: f64, t_end: f64 },
    #[error("non-commutative noise with m = {0} is not supported by the Milstein schemes")]
    NonCommutative(usize),
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty sample set")]
    EmptySamples,
    #[error("Lp exponent must satisfy p >= 2, got {0}")]
    InvalidExponent(f64),
    #[error("problem `{0}` has no exact solution")]
    NoExactSolution(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
