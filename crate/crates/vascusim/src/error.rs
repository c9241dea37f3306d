//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// Geometry is degenerate (collinear corners, coincident points, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A track does not span enough station range to reconstruct.
    #[error("insufficient extent: span {span_mm:.2} mm < minimum {min_mm:.2} mm")]
    InsufficientExtent { span_mm: f64, min_mm: f64 },

    /// An observation references a frame with no recorded pose.
    #[error("no pose recorded for frame {frame_id}")]
    MissingPose { frame_id: u64 },

    /// A sweep pose falls outside the phantom surface domain.
    #[error("pose {index} at ({x:.1}, {y:.1}) lies outside the phantom domain")]
    PoseOutsideDomain { index: usize, x: f64, y: f64 },

    /// The target vessel could not be matched to any contour in the frame.
    #[error("target lost: no contour overlaps the predicted vessel section")]
    TargetLost,

    /// Planning removed every candidate point.
    #[error("empty plan: {reason}")]
    EmptyPlan { reason: String },

    /// Scenario or phantom configuration problem (CLI exit code 2).
    #[error("config: {0}")]
    Config(String),

    /// A pipeline stage could not run (CLI exit code 3).
    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
