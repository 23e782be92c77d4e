use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Pinhole intrinsics. Pixel `(u, v)` has `u` horizontal, origin at the
/// center of the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok_focal = self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0;
        let ok_center = self.cx >= 0.0 && self.cy >= 0.0 && self.cx < self.width as f64 && self.cy < self.height as f64;
        if !ok_focal || !ok_center {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "fx={} fy={} cx={} cy={} for a {}x{} image",
                self.fx, self.fy, self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of an image resampled by `factor` to `width`×`height`.
    ///
    /// Keeps pixel centers consistent under block averaging: a fine pixel
    /// center `u` maps to `(u + 0.5)·factor − 0.5` in the coarse image.
    pub fn rescaled(&self, factor: f64, width: usize, height: usize) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: (self.cx + 0.5) * factor - 0.5,
            cy: (self.cy + 0.5) * factor - 0.5,
            width,
            height,
        }
    }

    pub fn backproject(&self, p: Vector2<f64>, z: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(GeometryError::NonPositiveDepth(z));
        }
        Ok(self.backproject_unchecked(p, z))
    }

    #[inline]
    pub(crate) fn backproject_unchecked(&self, p: Vector2<f64>, z: f64) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) * z / self.fx, (p.y - self.cy) * z / self.fy, z)
    }

    /// Returns `None` for points on or behind the image plane.
    #[inline]
    pub fn project(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        if !(x.z > 0.0) {
            return None;
        }
        Some(Vector2::new(
            self.fx * x.x / x.z + self.cx,
            self.fy * x.y / x.z + self.cy,
        ))
    }

    /// Whether `p` lies in `[0, W−1] × [0, H−1]`.
    #[inline]
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }
}
