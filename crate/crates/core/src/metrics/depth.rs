use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, DepthMap, PoseSE3, Vector2};
use crate::refine::FlowField;

use super::MetricsError;

pub const MIN_CORRESPONDENCES: usize = 100;

/// A pixel in frame `i` and the pixel showing the same surface point in
/// frame `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub a: Vector2<f64>,
    pub b: Vector2<f64>,
}

/// Correspondences from a flow field on frame `i + 1`'s grid: pixel `x`
/// there shows what frame `i` saw at `x − F(x)`. Every `stride`-th pixel.
pub fn correspondences_from_flow(flow: &FlowField, stride: usize) -> Vec<Correspondence> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for y in (0..flow.height()).step_by(stride) {
        for x in (0..flow.width()).step_by(stride) {
            if let Some((u, v)) = flow.get(x, y) {
                let b = Vector2::new(x as f64, y as f64);
                out.push(Correspondence {
                    a: b - Vector2::new(u, v),
                    b,
                });
            }
        }
    }
    out
}

/// Displacement statistics in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
    /// Mean displacement per consecutive frame pair, for bar plots.
    pub per_pair_mean: Vec<f64>,
}

impl DisplacementStats {
    /// `pair,mean_displacement_m` rows.
    pub fn bar_plot_csv(&self) -> String {
        let mut s = String::from("pair,mean_displacement_m\n");
        for (i, m) in self.per_pair_mean.iter().enumerate() {
            s.push_str(&format!("{i},{m:.8e}\n"));
        }
        s
    }
}

/// Backprojects both ends of every correspondence through their depth maps,
/// moves them into the world frame with the given camera-to-world poses and
/// measures the 3D gap. Correspondences landing on invalid depth are
/// skipped; each pair must keep at least [`MIN_CORRESPONDENCES`].
pub fn depth_consistency_stats(
    depths: &[DepthMap],
    intrinsics: &CameraIntrinsics,
    poses: &[PoseSE3],
    correspondences: &[Vec<Correspondence>],
) -> Result<DisplacementStats, MetricsError> {
    if depths.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            found: depths.len(),
        });
    }
    if poses.len() != depths.len() || correspondences.len() != depths.len() - 1 {
        return Err(MetricsError::Invalid(format!(
            "{} depth maps, {} poses, {} correspondence sets",
            depths.len(),
            poses.len(),
            correspondences.len()
        )));
    }
    let mut all = Vec::new();
    let mut per_pair_mean = Vec::with_capacity(correspondences.len());
    for (pair, set) in correspondences.iter().enumerate() {
        let (da, db) = (&depths[pair], &depths[pair + 1]);
        let (pa, pb) = (&poses[pair], &poses[pair + 1]);
        let gaps: Vec<f64> = set
            .iter()
            .filter_map(|c| {
                let xa = intrinsics.backproject(c.a, da.sample(&c.a)?).ok()?;
                let xb = intrinsics.backproject(c.b, db.sample(&c.b)?).ok()?;
                Some((pa.transform_point(&xa) - pb.transform_point(&xb)).norm())
            })
            .collect();
        if gaps.len() < MIN_CORRESPONDENCES {
            return Err(MetricsError::InsufficientCorrespondences {
                pair,
                found: gaps.len(),
            });
        }
        per_pair_mean.push(gaps.iter().sum::<f64>() / gaps.len() as f64);
        all.extend(gaps);
    }
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let median = if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    };
    Ok(DisplacementStats {
        mean: all.iter().sum::<f64>() / n as f64,
        median,
        max: all[n - 1],
        count: n,
        per_pair_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Twist, Vector3};

    /// Fronto-parallel plane at depth `z` in the world, seen by camera `pose`.
    fn plane_depth(k: &CameraIntrinsics, pose: &PoseSE3, z: f64) -> DepthMap {
        let (w, h) = (k.width, k.height);
        let inv = pose.inverse();
        let mut vals = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let ray = pose.rotation().matrix() * k.backproject(Vector2::new(x as f64, y as f64), 1.0).unwrap();
                let s = (z - pose.translation().z) / ray.z;
                vals.push(inv.transform_point(&(pose.translation() + ray * s)).z);
            }
        }
        DepthMap::from_values(w, h, vals).unwrap()
    }

    fn setup() -> (CameraIntrinsics, Vec<PoseSE3>, Vec<DepthMap>, Vec<Vec<Correspondence>>) {
        let k = CameraIntrinsics::new(40.0, 40.0, 19.5, 14.5, 40, 30).unwrap();
        let poses = vec![
            PoseSE3::identity(),
            PoseSE3::exp(&Twist::new(
                Vector3::new(0.0, 0.01, 0.0),
                Vector3::new(0.01, 0.0, 0.005),
            )),
        ];
        let depths: Vec<_> = poses.iter().map(|p| plane_depth(&k, p, 1.0)).collect();
        let mut set = Vec::new();
        for y in 2..28 {
            for x in 2..38 {
                let a = Vector2::new(x as f64, y as f64);
                let world = k.backproject(a, depths[0].get(x, y).unwrap()).unwrap();
                if let Some(b) = k.project(&poses[1].inverse().transform_point(&world)) {
                    if b.x > 1.0 && b.y > 1.0 && b.x < 38.0 && b.y < 28.0 {
                        set.push(Correspondence { a, b });
                    }
                }
            }
        }
        (k, poses, depths, vec![set])
    }

    #[test]
    fn static_scene_has_small_displacement() {
        let (k, poses, depths, corr) = setup();
        let s = depth_consistency_stats(&depths, &k, &poses, &corr).unwrap();
        // Bilinear depth lookup on a slanted view of a plane is nearly exact.
        assert!(s.max < 1e-4, "{s:?}");
        assert_eq!(s.per_pair_mean.len(), 1);
        assert!(s.median <= s.max && s.mean <= s.max);
    }

    #[test]
    fn depth_error_shows_up() {
        let (k, poses, mut depths, corr) = setup();
        depths[1] = depths[1].map_valid(|d| d * 1.1);
        let s = depth_consistency_stats(&depths, &k, &poses, &corr).unwrap();
        assert!(s.mean > 0.05);
        assert!(s.bar_plot_csv().starts_with("pair,mean_displacement_m\n0,"));
    }

    #[test]
    fn errors() {
        let (k, poses, depths, corr) = setup();
        assert!(matches!(
            depth_consistency_stats(&depths[..1], &k, &poses[..1], &[]),
            Err(MetricsError::TooShort { .. })
        ));
        let few = vec![corr[0][..50].to_vec()];
        assert!(matches!(
            depth_consistency_stats(&depths, &k, &poses, &few),
            Err(MetricsError::InsufficientCorrespondences { pair: 0, found: 50 })
        ));
    }

    #[test]
    fn flow_correspondences() {
        let f = FlowField::constant(10, 8, 1.5, -0.5);
        let c = correspondences_from_flow(&f, 2);
        assert_eq!(c.len(), 20);
        assert_eq!(c[1].a, Vector2::new(0.5, 0.5));
        assert_eq!(c[1].b, Vector2::new(2.0, 0.0));
    }
}
