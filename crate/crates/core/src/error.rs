use thiserror::Error;

/// Errors raised by the library. The CLI wraps these together with its own
/// configuration errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension {dim} exceeds the cap of {cap} amplitudes")]
    DimensionCap { dim: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("state is not normalized (trace or norm² = {0})")]
    NotNormalized(f64),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),

    #[error("invalid subsystem selection: {0}")]
    InvalidSubsystems(String),

    #[error("invalid projector family: {0}")]
    InvalidProjectors(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("outcome off the lattice: {0}")]
    OffLattice(String),

    #[error("no correction available for outcome {0}")]
    MissingCorrection(String),

    #[error("invalid EPR specification: {0}")]
    InvalidEpr(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outcome is impossible for this input (zero post-measurement norm)")]
    ImpossibleOutcome,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("total probability mass is zero")]
    ZeroMass,
}

pub type Result<T> = std::result::Result<T, Error>;
