use endofuse_core::geometry::{CameraIntrinsics, PoseSE3, RotationSO3, Twist, Vector3};
use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    /// Orbit of the eye about the vertical (world y) axis through the
    /// target, still looking at the target.
    Arc {
        step_deg: f64,
    },
    /// Translation by `step` meters per frame along a world direction.
    Dolly {
        direction: [f64; 3],
        step: f64,
    },
    /// Independent perturbations of the start pose, per frame.
    Jitter {
        sigma_rot_deg: f64,
        sigma_trans: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPathSpec {
    pub frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub motion: Motion,
}

/// Camera-to-world pose at `eye` looking at `target`, image y pointing
/// roughly along world −y.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Result<PoseSE3, SynthError> {
    let z = (target - eye)
        .try_normalize(1e-12)
        .ok_or_else(|| SynthError::InvalidSpec("eye and target coincide".into()))?;
    let down = Vector3::new(0.0, 1.0, 0.0);
    let x = down
        .cross(&z)
        .try_normalize(1e-9)
        .or_else(|| Vector3::new(0.0, 0.0, 1.0).cross(&z).try_normalize(1e-9))
        .ok_or_else(|| SynthError::InvalidSpec("degenerate viewing direction".into()))?;
    let y = z.cross(&x);
    let r = RotationSO3::from_matrix(Matrix3::from_columns(&[x, y, z]))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(PoseSE3::new(r, eye))
}

impl CameraPathSpec {
    pub fn poses(&self) -> Result<Vec<PoseSE3>, SynthError> {
        if self.frames == 0 {
            return Err(SynthError::InvalidSpec("path needs at least one frame".into()));
        }
        self.intrinsics
            .validate()
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let (eye, target) = (Vector3::from(self.eye), Vector3::from(self.target));
        let start = look_at(eye, target)?;
        match &self.motion {
            Motion::Static => Ok(vec![start; self.frames]),
            Motion::Arc { step_deg } => (0..self.frames)
                .map(|i| {
                    let a = (i as f64 * step_deg).to_radians();
                    let r = RotationSO3::exp(&Vector3::new(0.0, a, 0.0));
                    look_at(target + r.matrix() * (eye - target), target)
                })
                .collect(),
            Motion::Dolly { direction, step } => {
                let d = Vector3::from(*direction)
                    .try_normalize(1e-12)
                    .ok_or_else(|| SynthError::InvalidSpec("zero dolly direction".into()))?;
                Ok((0..self.frames)
                    .map(|i| PoseSE3::new(*start.rotation(), eye + d * (step * i as f64)))
                    .collect())
            }
            Motion::Jitter {
                sigma_rot_deg,
                sigma_trans,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let rot =
                    Normal::new(0.0, sigma_rot_deg.to_radians()).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
                let tr = Normal::new(0.0, *sigma_trans).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
                Ok((0..self.frames)
                    .map(|i| {
                        if i == 0 {
                            return start;
                        }
                        let w = Vector3::from_fn(|_, _| rot.sample(&mut rng));
                        let v = Vector3::from_fn(|_, _| tr.sample(&mut rng));
                        start.retract(&Twist::new(w, v))
                    })
                    .collect())
            }
        }
    }
}
