use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate snapshot matrix")]
    DegenerateSnapshots,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point outside the unit cube: coordinate {index} = {value}")]
    OutsideCube { index: usize, value: f64 },

    #[error("physical value outside the parameter box: {name} = {value} not in [{lower}, {upper}]")]
    OutsideBox {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("sparse grid too large: dim={dim}, level={level} needs more than {cap} points")]
    GridTooLarge { dim: usize, level: usize, cap: usize },

    #[error("multi-index set too large: dim={dim}, degree={degree} exceeds {cap} terms")]
    IndexSetTooLarge { dim: usize, degree: usize, cap: usize },

    #[error("integration failed at t={time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("model evaluation failed for point {point_id}: {reason}")]
    Evaluation { point_id: String, reason: String },

    #[error(
        "step would leave the unit cube for direction {direction} (coordinate {index} = {value}); use a smaller delta"
    )]
    DirectionOutsideCube { direction: usize, index: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
