use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid with {0} cells is under-resolved (need at least 8)")]
    UnderResolvedGrid(usize),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),

    #[error("boundary condition {bc} cannot be paired with a {degeneracy} coefficient")]
    InvalidPairing {
        bc: &'static str,
        degeneracy: &'static str,
    },

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("time step {dt} exceeds the admissible bound {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),

    #[error("solution blew up after t = {last_finite_time}")]
    BlowUp { last_finite_time: f64 },

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate slope |w_x| = {slope:e} below floor {floor:e}")]
    DegenerateSlope { slope: f64, floor: f64 },

    #[error("invalid prescription: {0}")]
    InvalidPrescription(String),

    #[error("sign pattern mismatch: {0}")]
    SignPatternMismatch(String),

    #[error("invalid amplification factor M = {0} (need M >= 1)")]
    InvalidAmplification(f64),

    #[error("accuracy {eta:e} not reached; best achieved error {best:e}")]
    Unachievable { eta: f64, best: f64 },

    #[error("steering failed: {0}")]
    SteeringFailed(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
