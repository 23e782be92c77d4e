//! Camera model, rigid-body transforms and image sampling.

mod camera;
mod image;
mod lie;

use thiserror::Error;

pub use camera::CameraIntrinsics;
pub use image::{DepthMap, DisparityMap, GridUnit, ImageGray, MaskedGrid, Meters, Pixels};
pub use lie::{hat, orthogonality_defect, PoseSE3, RotationSO3, Twist, ORTHOGONALITY_TOLERANCE};

pub use nalgebra::{Vector2, Vector3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("matrix is not a rotation (defect {defect:e})")]
    NotARotation { defect: f64 },
    #[error("SE(3) logarithm is ill-conditioned at rotation angle {angle}")]
    IllConditionedLog { angle: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}
