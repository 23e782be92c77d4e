use nalgebra::{Matrix3, Vector3};

use crate::geometry::{PoseSE3, RotationSO3};

use super::MetricsError;

/// Timestamped poses with strictly increasing timestamps (seconds).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<PoseSE3>) -> Result<Self, MetricsError> {
        if stamps.len() != poses.len() {
            return Err(MetricsError::Invalid(format!(
                "{} stamps for {} poses",
                stamps.len(),
                poses.len()
            )));
        }
        if let Some(i) = (1..stamps.len()).find(|&i| !(stamps[i] > stamps[i - 1])) {
            return Err(MetricsError::Invalid(format!(
                "timestamps not strictly increasing at index {i} ({} after {})",
                stamps[i],
                stamps[i - 1]
            )));
        }
        if stamps.iter().any(|s| !s.is_finite()) {
            return Err(MetricsError::Invalid("non-finite timestamp".into()));
        }
        Ok(Self { stamps, poses })
    }

    /// Timestamps `index / fps`.
    pub fn from_frame_rate(poses: Vec<PoseSE3>, fps: f64) -> Self {
        let stamps = (0..poses.len()).map(|i| i as f64 / fps).collect();
        Self { stamps, poses }
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Estimated and ground-truth poses paired by timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedTrajectory {
    pub est: Vec<PoseSE3>,
    pub gt: Vec<PoseSE3>,
    pub stamps: Vec<f64>,
}

impl PairedTrajectory {
    pub fn len(&self) -> usize {
        self.est.len()
    }

    pub fn is_empty(&self) -> bool {
        self.est.is_empty()
    }
}

/// Greedy nearest-timestamp pairing: candidate pairs within `max_dt` are
/// taken in order of increasing `|dt|`, each pose used at most once.
/// Output follows estimate order.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<PairedTrajectory, MetricsError> {
    if est.is_empty() || gt.is_empty() {
        return Err(MetricsError::NoMatches);
    }
    let mut candidates = Vec::new();
    for (i, t) in est.stamps.iter().enumerate() {
        let start = gt.stamps.partition_point(|s| *s < t - max_dt);
        for (j, s) in gt.stamps.iter().enumerate().skip(start) {
            let dt = (s - t).abs();
            if s - t > max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(MetricsError::NoMatches);
    }
    pairs.sort_unstable();
    Ok(PairedTrajectory {
        est: pairs.iter().map(|(i, _)| est.poses[*i]).collect(),
        gt: pairs.iter().map(|(_, j)| gt.poses[*j]).collect(),
        stamps: pairs.iter().map(|(i, _)| est.stamps[*i]).collect(),
    })
}

/// Per-frame absolute errors.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsoluteErrors {
    /// Millimeters.
    pub translation: Vec<f64>,
    /// Degrees, geodesic angle of `R_gtᵀ·R_est`.
    pub rotation: Vec<f64>,
    /// Millimeters, `|Δt|` per axis.
    pub per_axis: Vec<[f64; 3]>,
}

pub fn absolute_errors(pairs: &PairedTrajectory) -> AbsoluteErrors {
    let mut out = AbsoluteErrors {
        translation: Vec::with_capacity(pairs.len()),
        rotation: Vec::with_capacity(pairs.len()),
        per_axis: Vec::with_capacity(pairs.len()),
    };
    for (e, g) in pairs.est.iter().zip(&pairs.gt) {
        let d = (e.translation() - g.translation()) * 1000.0;
        out.translation.push(d.norm());
        out.per_axis.push([d.x.abs(), d.y.abs(), d.z.abs()]);
        let r = g.rotation().inverse() * *e.rotation();
        out.rotation.push(r.angle().to_degrees());
    }
    out
}

/// Translational relative pose error per step of `delta` frames, in mm.
pub fn relative_pose_error(pairs: &PairedTrajectory, delta: usize) -> Result<Vec<f64>, MetricsError> {
    if delta == 0 || pairs.len() < delta + 1 {
        return Err(MetricsError::TooShort {
            needed: delta + 1,
            found: pairs.len(),
        });
    }
    Ok((0..pairs.len() - delta)
        .map(|i| {
            let q = pairs.gt[i].inverse() * pairs.gt[i + delta];
            let p = pairs.est[i].inverse() * pairs.est[i + delta];
            (q.inverse() * p).translation().norm() * 1000.0
        })
        .collect())
}

/// Percentage of entries strictly below the series mean; 0 for an empty
/// series.
pub fn proportion_below_mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    100.0 * series.iter().filter(|e| **e < mean).count() as f64 / series.len() as f64
}

pub fn path_length(poses: &[PoseSE3]) -> f64 {
    poses
        .windows(2)
        .map(|w| (w[1].translation() - w[0].translation()).norm())
        .sum()
}

/// Estimated over ground-truth path length.
pub fn trajectory_length_ratio(est: &[PoseSE3], gt: &[PoseSE3]) -> Result<f64, MetricsError> {
    if est.len() < 2 || gt.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            found: est.len().min(gt.len()),
        });
    }
    let gt_len = path_length(gt);
    if gt_len == 0.0 {
        return Err(MetricsError::ZeroLengthGroundTruth);
    }
    Ok(path_length(est) / gt_len)
}

/// Rigid transform `A` minimizing `Σ‖A·t_est − t_gt‖²` over positions.
pub fn rigid_alignment(pairs: &PairedTrajectory) -> PoseSE3 {
    let n = pairs.len() as f64;
    let mean = |ps: &[PoseSE3]| ps.iter().map(|p| *p.translation()).sum::<Vector3<f64>>() / n;
    let (me, mg) = (mean(&pairs.est), mean(&pairs.gt));
    let mut cov = Matrix3::zeros();
    for (e, g) in pairs.est.iter().zip(&pairs.gt) {
        cov += (g.translation() - mg) * (e.translation() - me).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = RotationSO3::project_matrix(&(u * s * vt));
    let t = mg - r.matrix() * me;
    PoseSE3::new(r, t)
}
