use thiserror::Error;

use crate::Point;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} outside admissible range {range} for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },

    #[error("non-finite value at node ({:.6}, {:.6}, {:.6}) (node {index})", .point.x, .point.y, .point.z)]
    NonFinite { index: usize, point: Point },

    #[error("weight overflow: log-weight {log_weight:.3} exceeds f64 range; rescale in the log domain")]
    WeightOverflow { log_weight: f64 },

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("singular evaluation at the source point of {0}")]
    Singularity(&'static str),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
