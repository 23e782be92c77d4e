//! Analytic synthetic scenes with exact depth, flow and poses.

mod path;
mod perturb;
mod scene;
mod sequence;

use thiserror::Error;

pub use path::{look_at, CameraPathSpec, Motion};
pub use perturb::{perturb_depth, PerturbModel};
pub use scene::{LightingSpec, RenderedFrame, SceneSpec, Surface, TextureSpec};
pub use sequence::{
    ground_truth_flow, input_depth, render_frames, render_sequence, RenderOptions, SyntheticSequence,
    MAX_STEP_ROTATION_DEG, MAX_STEP_TRANSLATION, MIN_COVERAGE,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("frame {frame}: surface covers {:.1}% of the image", coverage * 100.0)]
    FrustumViolation { frame: usize, coverage: f64 },
    #[error("frame {frame}: step of {rotation_deg:.2} deg and {:.1}% of mean depth is too large", translation_fraction * 100.0)]
    PathTooFast {
        frame: usize,
        rotation_deg: f64,
        translation_fraction: f64,
    },
    #[error(transparent)]
    Io(#[from] endofuse_io::IoError),
}
