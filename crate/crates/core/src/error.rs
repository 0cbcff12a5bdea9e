use thiserror::Error;

use crate::vehicle::Wheel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid Stribeck coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("mass point list is empty")]
    EmptyPoints,

    #[error("invalid vehicle: {0}")]
    InvalidVehicle(String),

    #[error("infeasible wheel load on {wheel:?}: {magnitude:.3} N (tip-over)")]
    InfeasibleLoad { wheel: Wheel, magnitude: f64 },

    #[error("world inertia is singular (condition number {condition:.3e})")]
    SingularInertia { condition: f64 },

    #[error("rollout failed at step {step}: {source}")]
    Rollout {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("cell ({x}, {y}) is out of map bounds")]
    OutOfBounds { x: i64, y: i64 },

    #[error("cell ({x}, {y}) has no data")]
    NoData { x: usize, y: usize },

    #[error("singular normal equations in Levenberg-Marquardt step")]
    SingularNormalEquations,

    #[error("goal unreachable: {0}")]
    Unreachable(String),

    #[error("speed profile infeasible: {0}")]
    Infeasible(String),

    #[error("invalid world spec: {0}")]
    InvalidWorld(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("duplicate checkpoints at index {0}")]
    DuplicatePoints(usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidCoefficients(_) => "invalid_coefficients",
            Error::EmptyPoints => "empty_points",
            Error::InvalidVehicle(_) => "invalid_vehicle",
            Error::InfeasibleLoad { .. } => "infeasible_load",
            Error::SingularInertia { .. } => "singular_inertia",
            Error::Rollout { .. } => "rollout",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::NoData { .. } => "no_data",
            Error::SingularNormalEquations => "singular_normal_equations",
            Error::Unreachable(_) => "unreachable",
            Error::Infeasible(_) => "infeasible",
            Error::InvalidWorld(_) => "invalid_world",
            Error::Config(_) => "config",
            Error::DuplicatePoints(_) => "duplicate_points",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
