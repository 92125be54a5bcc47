use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("nearest boundary point is not unique at {point:?} (signed distance {distance})")]
    NonUniqueProjection { point: Vec<f64>, distance: f64 },

    #[error("point {point:?} is not on the boundary (signed distance {distance:e})")]
    NotOnBoundary { point: Vec<f64>, distance: f64 },

    #[error("reflection direction is not transversal at {point:?}: r·n = {dot:e}")]
    NonTransversal { point: Vec<f64>, dot: f64 },

    #[error("invalid reflection field: {0}")]
    InvalidReflection(String),

    #[error("singular diffusion matrix at {point:?}: |det| = {det:e}")]
    SingularDiffusion { point: Vec<f64>, det: f64 },

    #[error("coefficient evaluated outside its validity region at {point:?}")]
    OutsideValidity { point: Vec<f64> },

    #[error("invalid coefficient field: {0}")]
    InvalidCoefficients(String),

    #[error("invalid penalty schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("empty sample")]
    EmptySample,

    #[error("mismatched lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("accumulator decreases at index {index}: {from} -> {to}")]
    DecreasingAccumulator { index: usize, from: f64, to: f64 },

    #[error("Skorokhod driver must start at or above zero, got {0}")]
    NegativeStart(f64),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("projection failed, time step too coarse: {0}")]
    StepTooCoarse(String),

    #[error("ensembles have mismatched horizons: {0} vs {1}")]
    MismatchedHorizons(f64, f64),
}
