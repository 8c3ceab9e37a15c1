use thiserror::Error;

/// Errors raised by the construction and verification pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible Λ = {lambda}: piece {} requires Λ > {required}", .piece + 1)]
    InadmissibleLambda {
        piece: usize,
        required: f64,
        lambda: f64,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-smooth input: {0}")]
    NonSmooth(String),

    #[error("wave rejected: {0}")]
    WaveRejected(String),

    #[error("stagnation after {iterations} iterations (deficit {deficit:.6e}, {stalled} consecutive rejected waves)")]
    Stagnation {
        iterations: usize,
        deficit: f64,
        stalled: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unknown identity tag `{0}`")]
    UnknownIdentity(String),

    #[error("pressure law p = ρ^{exponent} violated on pieces {pieces:?}")]
    PressureLawMismatch { exponent: f64, pieces: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, Error>;
