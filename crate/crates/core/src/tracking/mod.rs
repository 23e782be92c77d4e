//! Direct photometric pose tracking against keyframes with a decoupled
//! rotation-then-rigid-motion dog-leg optimizer, plus pose smoothing.

mod align;
mod dogleg;
mod photometric;
mod pyramid;
mod sequence;
mod wema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthMap, GeometryError, ImageGray, PoseSE3};

pub use align::{align_pair, optimize_rotation_so3, optimize_se3, AlignOutcome};
pub use dogleg::{
    dogleg_from_normal, dogleg_step, minimize, LeastSquaresProblem, Linearization, SolveError, SolverOutcome,
    SolverParams, StepKind, Termination, TrustRegion, GN_DAMPING,
};
pub use photometric::{photometric_residuals, residual_jacobian, Parameterization, Residuals, TrackPoints};
pub use pyramid::{build_pyramid, FramePyramid, PyramidLevel};
pub use sequence::{track_sequence, KeyframeSchedule, TrackedSequence};
pub use wema::{regularize_sequence, wema_regularize, WemaMode, WemaParams};

/// Minimum residual count for a level to be usable.
pub const MIN_RESIDUALS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("only {found} valid residuals at pyramid level {level} (need {MIN_RESIDUALS})")]
    TooFewResiduals { level: usize, found: usize },
    #[error("alignment failed at every pyramid level")]
    AllLevelsFailed,
    #[error("pyramid: {0}")]
    Pyramid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("tracking lost at frame {frame} (reference {reference}): {source}")]
    Lost {
        frame: usize,
        reference: usize,
        /// World poses of frames `0..frame`.
        partial: Vec<PoseSE3>,
        source: AlignError,
    },
    #[error("invalid frame {frame}: {reason}")]
    InvalidFrame { frame: usize, reason: String },
    #[error("no frames to track")]
    Empty,
}

/// Intensity image plus depth, as consumed by the tracker.
#[derive(Clone, Debug)]
pub struct PseudoRGBDFrame {
    pub index: usize,
    pub image: ImageGray,
    pub depth: DepthMap,
    pub intrinsics: CameraIntrinsics,
    /// Kept for fusion; the tracker ignores it.
    pub color: Option<Vec<[u8; 3]>>,
}

impl PseudoRGBDFrame {
    pub fn new(
        index: usize,
        image: ImageGray,
        depth: DepthMap,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        let (w, h) = (intrinsics.width, intrinsics.height);
        if image.width() != w || image.height() != h || depth.width() != w || depth.height() != h {
            return Err(GeometryError::DimensionMismatch(format!(
                "frame {index}: image {}x{}, depth {}x{}, intrinsics {w}x{h}",
                image.width(),
                image.height(),
                depth.width(),
                depth.height()
            )));
        }
        Ok(Self {
            index,
            image,
            depth,
            intrinsics,
            color: None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    Huber { delta: f64 },
    L2,
}

impl Default for Loss {
    fn default() -> Self {
        Loss::Huber { delta: 0.1 }
    }
}

impl Loss {
    /// Cost contribution and IRLS weight of a residual.
    #[inline]
    pub fn evaluate(&self, r: f64) -> (f64, f64) {
        match *self {
            Loss::L2 => (0.5 * r * r, 1.0),
            Loss::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    (0.5 * r * r, 1.0)
                } else {
                    (delta * (a - 0.5 * delta), delta / a)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingParams {
    pub pyramid_levels: usize,
    pub pyramid_factor: f64,
    pub keyframe_alpha: usize,
    pub loss: Loss,
    pub solver: SolverParams,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 5,
            pyramid_factor: 0.5,
            keyframe_alpha: 2,
            loss: Loss::default(),
            solver: SolverParams::default(),
        }
    }
}

impl TrackingParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.pyramid_levels == 0 {
            return Err("pyramid_levels must be at least 1".into());
        }
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return Err(format!("pyramid_factor {} outside (0, 1)", self.pyramid_factor));
        }
        if self.keyframe_alpha == 0 {
            return Err("keyframe_alpha must be at least 1".into());
        }
        if let Loss::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(format!("huber delta {delta} must be positive"));
            }
        }
        self.solver.validate()
    }
}
