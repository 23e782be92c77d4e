use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector3, Vector6};
use rayon::prelude::*;

use crate::geometry::PoseSE3;
use crate::parallel::chunked_reduce;

use super::{AlignError, Loss, PyramidLevel, MIN_RESIDUALS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameterization {
    /// Rotation columns only.
    So3,
    /// `(ω, v)`.
    Se3,
}

/// Back-projected pixels of the tracked level that have valid depth.
#[derive(Clone, Debug)]
pub struct TrackPoints {
    points: Vec<Vector3<f64>>,
    intensity: Vec<f64>,
    pixel: Vec<usize>,
}

impl TrackPoints {
    pub fn from_level(level: &PyramidLevel) -> Self {
        let (w, h) = (level.image.width(), level.image.height());
        let mut points = Vec::new();
        let mut intensity = Vec::new();
        let mut pixel = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if let Some(z) = level.depth.get(x, y) {
                    let p = Vector2::new(x as f64, y as f64);
                    points.push(level.intrinsics.backproject_unchecked(p, z));
                    intensity.push(level.image.get(x, y));
                    pixel.push(y * w + x);
                }
            }
        }
        Self {
            points,
            intensity,
            pixel,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Signed residuals `I_ref(p′) − I_track(p)` with the pixel index of `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub values: Vec<f64>,
    pub pixels: Vec<usize>,
}

impl Residuals {
    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|r| r * r).sum::<f64>() / self.values.len() as f64).sqrt()
    }
}

/// Residual of point `k` under the relative pose, `None` when it leaves the
/// reference image or falls behind the camera.
#[inline]
fn residual_at(ref_level: &PyramidLevel, pts: &TrackPoints, pose: &PoseSE3, k: usize) -> Option<f64> {
    let xr = pose.transform_point(&pts.points[k]);
    let q = ref_level.intrinsics.project(&xr)?;
    Some(ref_level.image.sample(&q)? - pts.intensity[k])
}

/// Residual and its Jacobian row w.r.t. a right perturbation `pose·exp(δ)`.
#[inline]
fn residual_row(ref_level: &PyramidLevel, pts: &TrackPoints, pose: &PoseSE3, k: usize) -> Option<(f64, Vector6<f64>)> {
    let xt = &pts.points[k];
    let xr = pose.transform_point(xt);
    let kk = &ref_level.intrinsics;
    let q = kk.project(&xr)?;
    let (value, grad) = ref_level.image.sample_with_gradient(&q)?;
    let iz = 1.0 / xr.z;
    // gradᵀ · ∂π/∂X at the reference-frame point.
    let a = Vector3::new(
        grad.x * kk.fx * iz,
        grad.y * kk.fy * iz,
        -(grad.x * kk.fx * xr.x + grad.y * kk.fy * xr.y) * iz * iz,
    );
    // Chain through X_r = R·exp(δ)·X_t + t: rotation part X_t × (Rᵀa).
    let b = pose.rotation().matrix().transpose() * a;
    let rot = xt.cross(&b);
    let row = Vector6::new(rot.x, rot.y, rot.z, b.x, b.y, b.z);
    Some((value - pts.intensity[k], row))
}

pub fn photometric_residuals(
    ref_level: &PyramidLevel,
    track_level: &PyramidLevel,
    pose: &PoseSE3,
) -> Result<Residuals, AlignError> {
    let pts = TrackPoints::from_level(track_level);
    let out: Vec<Option<(f64, usize)>> = (0..pts.len())
        .into_par_iter()
        .map(|k| residual_at(ref_level, &pts, pose, k).map(|r| (r, pts.pixel[k])))
        .collect();
    let (values, pixels): (Vec<f64>, Vec<usize>) = out.into_iter().flatten().unzip();
    if values.len() < MIN_RESIDUALS {
        return Err(AlignError::TooFewResiduals {
            level: 0,
            found: values.len(),
        });
    }
    Ok(Residuals { values, pixels })
}

/// Residuals and the `N×3` or `N×6` Jacobian over the same valid rows.
pub fn residual_jacobian(
    ref_level: &PyramidLevel,
    track_level: &PyramidLevel,
    pose: &PoseSE3,
    param: Parameterization,
) -> Result<(DVector<f64>, DMatrix<f64>), AlignError> {
    let pts = TrackPoints::from_level(track_level);
    let rows: Vec<(f64, Vector6<f64>)> = (0..pts.len())
        .into_par_iter()
        .filter_map(|k| residual_row(ref_level, &pts, pose, k))
        .collect();
    if rows.len() < MIN_RESIDUALS {
        return Err(AlignError::TooFewResiduals {
            level: 0,
            found: rows.len(),
        });
    }
    let cols = match param {
        Parameterization::So3 => 3,
        Parameterization::Se3 => 6,
    };
    let r = DVector::from_iterator(rows.len(), rows.iter().map(|(v, _)| *v));
    let j = DMatrix::from_fn(rows.len(), cols, |i, c| rows[i].1[c]);
    Ok((r, j))
}

/// Mean robust cost with its IRLS gradient and Gauss–Newton Hessian.
pub(crate) struct NormalEquations {
    pub cost: f64,
    pub hessian: Matrix6<f64>,
    pub gradient: Vector6<f64>,
    pub count: usize,
}

pub(crate) fn normal_equations(
    ref_level: &PyramidLevel,
    pts: &TrackPoints,
    pose: &PoseSE3,
    loss: Loss,
) -> NormalEquations {
    let zero = || (0.0, Matrix6::zeros(), Vector6::zeros(), 0usize);
    let (cost, h, g, n) = chunked_reduce(
        pts.len(),
        |range| {
            let mut acc = zero();
            for k in range {
                if let Some((r, row)) = residual_row(ref_level, pts, pose, k) {
                    let (c, w) = loss.evaluate(r);
                    acc.0 += c;
                    acc.1 += (row * w) * row.transpose();
                    acc.2 += row * (w * r);
                    acc.3 += 1;
                }
            }
            acc
        },
        zero(),
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
    );
    let scale = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    NormalEquations {
        cost: cost * scale,
        hessian: h * scale,
        gradient: g * scale,
        count: n,
    }
}

/// Robust cost decrease from `from` to `to` over the points with a residual
/// at both poses, divided by the residual count at `from`. Points entering or
/// leaving the image would otherwise make the mean cost jump.
pub(crate) fn cost_reduction(
    ref_level: &PyramidLevel,
    pts: &TrackPoints,
    from: &PoseSE3,
    to: &PoseSE3,
    loss: Loss,
) -> (f64, usize) {
    let (d, n) = chunked_reduce(
        pts.len(),
        |range| {
            let mut acc = (0.0, 0usize);
            for k in range {
                if let Some(a) = residual_at(ref_level, pts, from, k) {
                    acc.1 += 1;
                    if let Some(b) = residual_at(ref_level, pts, to, k) {
                        acc.0 += loss.evaluate(a).0 - loss.evaluate(b).0;
                    }
                }
            }
            acc
        },
        (0.0, 0),
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    (if n > 0 { d / n as f64 } else { 0.0 }, n)
}

/// Mean robust cost and residual count.
pub(crate) fn cost(ref_level: &PyramidLevel, pts: &TrackPoints, pose: &PoseSE3, loss: Loss) -> (f64, usize) {
    let (c, n) = chunked_reduce(
        pts.len(),
        |range| {
            let mut acc = (0.0, 0usize);
            for k in range {
                if let Some(r) = residual_at(ref_level, pts, pose, k) {
                    acc.0 += loss.evaluate(r).0;
                    acc.1 += 1;
                }
            }
            acc
        },
        (0.0, 0),
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    (if n > 0 { c / n as f64 } else { 0.0 }, n)
}
