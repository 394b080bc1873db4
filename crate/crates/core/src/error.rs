use thiserror::Error;

/// Errors surfaced by the field, curvature, flow and verification layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("metric not invertible at node {node}: min eigenvalue {min_eig:e}")]
    NonInvertibleMetric { node: usize, min_eig: f64 },

    #[error("positive definiteness lost at node {node} (min eigenvalue {min_eig:e}) at t = {time}")]
    PositivityLoss { node: usize, min_eig: f64, time: f64 },

    #[error("time step {dt:e} violates the stability bound {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("trajectory holds no time slices")]
    EmptyTrajectory,

    #[error("time {t} outside usable range [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("resolution floor reached: {0}")]
    ResolutionFloor(String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed field file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
