//! Rotations, rigid transforms and their tangent-space coordinates.
//!
//! Twists are ordered `(ω, v)`: rotation first, then translation. Updates
//! during optimization are right perturbations, `T ← T · exp(δ)`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};

use super::GeometryError;

/// Largest tolerated `‖RᵀR − I‖_∞`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;
/// Compositions after which a pose rotation is projected back onto SO(3).
const RENORMALIZE_EVERY: u32 = 100;
/// Distance from π below which the SE(3) logarithm is reported ill-conditioned.
const LOG_NEAR_PI: f64 = 1e-6;

#[inline]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

#[inline]
fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A 3×3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSO3(Matrix3<f64>);

impl RotationSO3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` only if it is orthonormal with determinant 1.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let defect = orthogonality_defect(&m);
        let det_err = (m.determinant() - 1.0).abs();
        if !(defect < ORTHOGONALITY_TOLERANCE && det_err < ORTHOGONALITY_TOLERANCE) {
            return Err(GeometryError::NotARotation {
                defect: defect.max(det_err),
            });
        }
        Ok(Self(m))
    }

    /// Nearest rotation to `m` in the Frobenius sense.
    pub fn project_matrix(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Rodrigues' formula.
    pub fn exp(w: &Vector3<f64>) -> Self {
        let theta2 = w.norm_squared();
        let theta = theta2.sqrt();
        let k = hat(w);
        let (a, b) = if theta < 1e-4 {
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            )
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Self(Matrix3::identity() + k * a + k * k * b)
    }

    /// Axis-angle vector with angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        let r = &self.0;
        let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let skew = vee(&(r - r.transpose())) * 0.5;
        let sin = skew.norm();
        let theta = sin.atan2(cos);
        if theta < 1e-4 {
            // θ/sinθ ≈ 1 + θ²/6
            return skew * (1.0 + theta * theta / 6.0);
        }
        if cos > -0.9 {
            return skew * (theta / sin);
        }
        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part R + Rᵀ = 2cosθ·I + 2(1 − cosθ)·nnᵀ.
        let sym = (r + r.transpose()) * 0.5;
        let nn = (sym - Matrix3::identity() * cos) / (1.0 - cos);
        let (mut best, mut best_val) = (0, nn[(0, 0)]);
        for i in 1..3 {
            if nn[(i, i)] > best_val {
                best = i;
                best_val = nn[(i, i)];
            }
        }
        let mut axis: Vector3<f64> = nn.column(best).into_owned() / best_val.max(0.0).sqrt();
        axis.normalize_mut();
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }

    pub fn angle(&self) -> f64 {
        let cos = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let sin = vee(&(self.0 - self.0.transpose())).norm() * 0.5;
        sin.atan2(cos)
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl Mul for RotationSO3 {
    type Output = RotationSO3;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for &RotationSO3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

pub fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

/// Tangent-space coordinates `(ω, v)` of SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self(Vector6::new(omega.x, omega.y, omega.z, v.x, v.y, v.z))
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn v(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Left Jacobian of SO(3), which maps `v` to the translation of `exp(ω, v)`.
fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let half = (0.5 * theta).sin();
    let b = if theta < 1e-8 { 0.5 } else { 2.0 * half * half / theta2 };
    let c = if theta < 0.05 {
        1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0 - theta2 * theta2 * theta2 / 362_880.0
    } else {
        (theta - theta.sin()) / (theta2 * theta)
    };
    Matrix3::identity() + k * b + k * k * c
}

fn left_jacobian_inverse(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let c = if theta < 0.05 {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30_240.0 + theta2 * theta2 * theta2 / 1_209_600.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// Rigid-body transform `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug)]
pub struct PoseSE3 {
    rotation: RotationSO3,
    translation: Vector3<f64>,
    /// Compositions since the rotation was last re-orthonormalized.
    drift: u32,
}

impl PartialEq for PoseSE3 {
    fn eq(&self, other: &Self) -> bool {
        self.rotation == other.rotation && self.translation == other.translation
    }
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self::new(RotationSO3::identity(), Vector3::zeros())
    }

    pub fn new(rotation: RotationSO3, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            drift: 0,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(RotationSO3::identity(), t)
    }

    pub fn from_rotation(r: RotationSO3) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Accepts a homogeneous matrix whose bottom row is `(0, 0, 0, 1)`.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::NotARotation {
                defect: (bottom[3] - 1.0).abs().max(bottom[0].abs()),
            });
        }
        let r = RotationSO3::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self::new(r, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    pub fn rotation(&self) -> &RotationSO3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn exp(xi: &Twist) -> Self {
        let w = xi.omega();
        Self::new(RotationSO3::exp(&w), left_jacobian(&w) * xi.v())
    }

    /// Fails when the rotation angle is within 1e-6 of π, where the
    /// axis and the translation part are ill-conditioned.
    pub fn log(&self) -> Result<Twist, GeometryError> {
        let angle = self.rotation.angle();
        if (PI - angle).abs() < LOG_NEAR_PI {
            return Err(GeometryError::IllConditionedLog { angle });
        }
        let w = self.rotation.log();
        Ok(Twist::new(w, left_jacobian_inverse(&w) * self.translation))
    }

    pub fn compose(&self, other: &Self) -> Self {
        let r = self.rotation.0 * other.rotation.0;
        let t = self.rotation.0 * other.translation + self.translation;
        let drift = self.drift.max(other.drift) + 1;
        if drift >= RENORMALIZE_EVERY || orthogonality_defect(&r) > ORTHOGONALITY_TOLERANCE {
            Self::new(RotationSO3::project_matrix(&r), t)
        } else {
            Self {
                rotation: RotationSO3(r),
                translation: t,
                drift,
            }
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.inverse();
        let t = -(rt.0 * self.translation);
        Self {
            rotation: rt,
            translation: t,
            drift: self.drift,
        }
    }

    #[inline]
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.0 * x + self.translation
    }

    /// `self · exp(δ)`.
    pub fn retract(&self, delta: &Twist) -> Self {
        self.compose(&Self::exp(delta))
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

impl Mul for &PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: Self) -> PoseSE3 {
        self.compose(rhs)
    }
}
