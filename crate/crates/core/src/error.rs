use thiserror::Error;

use crate::stadium::ReturnRecord;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input {0}")]
    NonFinite(f64),

    #[error("point {0} outside [0, 1]")]
    OutOfDomain(f64),

    #[error("tangential collision state rejected (psi = {psi})")]
    Tangential { psi: f64 },

    #[error("no boundary intersection found from {component:?} at arc {arc}, psi {psi}")]
    NoIntersection { component: crate::stadium::Component, arc: f64, psi: f64 },

    #[error("excursion exceeded {cap} collisions without returning")]
    RunawayExcursion { cap: u64, partial: Box<ReturnRecord> },

    #[error("quadrature did not converge (estimate {estimate}, error {error})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("roof sequence exhausted before time {0}")]
    RoofExhausted(f64),

    #[error("transfer operator series did not decay within {0} iterations")]
    NoDecay(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing calibration: {0}")]
    MissingCalibration(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("run interrupted after {0} chunks")]
    Interrupted(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
