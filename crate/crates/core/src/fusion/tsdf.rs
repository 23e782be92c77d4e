use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, DepthMap, PoseSE3};
use crate::tracking::PseudoRGBDFrame;

use super::FusionError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Meters.
    pub voxel_size: f64,
    /// Truncation distance in voxels.
    pub mu_voxels: f64,
    pub weight_max: f64,
    /// Padding around the first frame's frustum, in voxels.
    pub padding_voxels: f64,
    /// Explicit world-space bounds `[min, max]`; overrides the frustum.
    pub bounds: Option<([f64; 3], [f64; 3])>,
    /// The voxel size grows when the bounds would need more voxels.
    pub max_voxels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.005,
            mu_voxels: 4.0,
            weight_max: 100.0,
            padding_voxels: 10.0,
            bounds: None,
            max_voxels: 8_000_000,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: String| Err(FusionError::InvalidConfig(m));
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad(format!("voxel_size {}", self.voxel_size));
        }
        if !(self.mu_voxels >= 1.0) {
            return bad(format!("truncation of {} voxels is below one voxel", self.mu_voxels));
        }
        if !(self.weight_max >= 1.0) || self.max_voxels < 8 || !(self.padding_voxels >= 0.0) {
            return bad("weight_max, max_voxels or padding out of range".into());
        }
        if let Some((lo, hi)) = self.bounds {
            if (0..3).any(|i| !(hi[i] > lo[i])) {
                return bad(format!("empty bounds {lo:?}..{hi:?}"));
            }
        }
        Ok(())
    }
}

/// Dense TSDF volume. Voxel `(i, j, k)` is centered at
/// `origin + voxel_size·(i, j, k)`; storage is x-fastest.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    mu: f64,
    weight_max: f64,
    tsdf: Vec<f64>,
    weight: Vec<f32>,
    color: Vec<[f32; 3]>,
}

/// Occupancy summary of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStats {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub total_voxels: usize,
    pub observed_voxels: usize,
    /// Observed voxels with `|tsdf| < 1`.
    pub band_voxels: usize,
}

impl VoxelGrid {
    pub fn new(
        origin: Vector3<f64>,
        voxel_size: f64,
        dims: [usize; 3],
        mu: f64,
        weight_max: f64,
    ) -> Result<Self, FusionError> {
        if !(voxel_size > 0.0) || !(mu >= voxel_size) || dims.iter().any(|d| *d < 2) {
            return Err(FusionError::InvalidConfig(format!(
                "voxel {voxel_size}, mu {mu}, dims {dims:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            origin,
            voxel_size,
            dims,
            mu,
            weight_max,
            tsdf: vec![1.0; n],
            weight: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        })
    }

    /// Grid spanning `[lo, hi]` under `config`, coarsened to respect
    /// `max_voxels`.
    pub fn from_bounds(lo: Vector3<f64>, hi: Vector3<f64>, config: &GridConfig) -> Result<Self, FusionError> {
        config.validate()?;
        let extent = hi - lo;
        let mut voxel = config.voxel_size;
        let count = |v: f64| -> [usize; 3] { [0, 1, 2].map(|i| (extent[i] / v).ceil() as usize + 1) };
        let mut dims = count(voxel);
        let total = |d: [usize; 3]| d[0] as f64 * d[1] as f64 * d[2] as f64;
        if total(dims) > config.max_voxels as f64 {
            voxel *= (total(dims) / config.max_voxels as f64).cbrt();
            dims = count(voxel);
            while total(dims) > config.max_voxels as f64 {
                voxel *= 1.01;
                dims = count(voxel);
            }
            log::warn!(
                "grid needs more than {} voxels at {} m; coarsened to {voxel:.5} m",
                config.max_voxels,
                config.voxel_size
            );
        }
        Self::new(lo, voxel, dims, config.mu_voxels * voxel, config.weight_max)
    }

    /// Bounds of the first frame's view frustum between its nearest and
    /// farthest valid depth, padded.
    pub fn from_frustum(frame: &PseudoRGBDFrame, pose: &PoseSE3, config: &GridConfig) -> Result<Self, FusionError> {
        config.validate()?;
        if let Some((lo, hi)) = config.bounds {
            return Self::from_bounds(Vector3::from(lo), Vector3::from(hi), config);
        }
        let (zmin, zmax) = depth_range(&frame.depth).ok_or(FusionError::NoValidDepth { frame: frame.index })?;
        let k = &frame.intrinsics;
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let corners = [
            (0.0, 0.0),
            ((k.width - 1) as f64, 0.0),
            (0.0, (k.height - 1) as f64),
            ((k.width - 1) as f64, (k.height - 1) as f64),
        ];
        for z in [zmin, zmax] {
            for (u, v) in corners {
                let p = pose.transform_point(&k.backproject_unchecked(Vector2::new(u, v), z));
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        let pad = Vector3::repeat(config.padding_voxels * config.voxel_size);
        Self::from_bounds(lo - pad, hi + pad, config)
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tsdf(&self) -> &[f64] {
        &self.tsdf
    }

    pub fn weights(&self) -> &[f32] {
        &self.weight
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.color
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.voxel_size
    }

    /// Overwrites one voxel; used to load analytic fields.
    pub fn set(&mut self, i: usize, j: usize, k: usize, tsdf: f64, weight: f32) {
        let idx = self.index(i, j, k);
        self.tsdf[idx] = tsdf.clamp(-1.0, 1.0);
        self.weight[idx] = weight.clamp(0.0, self.weight_max as f32);
    }

    /// Running-average update of every voxel in front of or within `mu`
    /// behind the observed surface.
    pub fn integrate(&mut self, frame: &PseudoRGBDFrame, world_pose: &PoseSE3) {
        let world_to_cam = world_pose.inverse();
        let k = frame.intrinsics;
        let [nx, ny, _] = self.dims;
        let (origin, voxel, mu, wmax) = (self.origin, self.voxel_size, self.mu, self.weight_max as f32);
        let depth = &frame.depth;
        let gray = frame.image.data();
        let colors = frame.color.as_deref();
        let slab = nx * ny;
        self.tsdf
            .par_chunks_mut(slab)
            .zip(self.weight.par_chunks_mut(slab))
            .zip(self.color.par_chunks_mut(slab))
            .enumerate()
            .for_each(|(kz, ((tsdf, weight), color))| {
                for j in 0..ny {
                    for i in 0..nx {
                        let p = origin + Vector3::new(i as f64, j as f64, kz as f64) * voxel;
                        let xc = world_to_cam.transform_point(&p);
                        let Some(pix) = nearest_pixel(&k, &xc) else { continue };
                        let Some(z) = depth.at(pix) else { continue };
                        let sdf = z - xc.z;
                        if sdf <= -mu {
                            continue;
                        }
                        let obs = (sdf / mu).min(1.0);
                        let idx = j * nx + i;
                        let w = weight[idx];
                        let inv = 1.0 / (w as f64 + 1.0);
                        tsdf[idx] += (obs - tsdf[idx]) * inv;
                        let rgb = match colors {
                            Some(c) => c[pix].map(|v| v as f32),
                            None => [(gray[pix] * 255.0) as f32; 3],
                        };
                        for (c, v) in color[idx].iter_mut().zip(rgb) {
                            *c += (v - *c) * inv as f32;
                        }
                        weight[idx] = (w + 1.0).min(wmax);
                    }
                }
            });
    }

    pub fn occupancy(&self) -> OccupancyStats {
        let observed = self.weight.iter().filter(|w| **w > 0.0).count();
        let band = self
            .weight
            .iter()
            .zip(&self.tsdf)
            .filter(|(w, t)| **w > 0.0 && t.abs() < 1.0)
            .count();
        OccupancyStats {
            dims: self.dims,
            voxel_size: self.voxel_size,
            total_voxels: self.tsdf.len(),
            observed_voxels: observed,
            band_voxels: band,
        }
    }
}

#[inline]
fn nearest_pixel(k: &CameraIntrinsics, xc: &Vector3<f64>) -> Option<usize> {
    let q = k.project(xc)?;
    let (u, v) = (q.x.round(), q.y.round());
    if u < 0.0 || v < 0.0 || u > (k.width - 1) as f64 || v > (k.height - 1) as f64 {
        return None;
    }
    Some(v as usize * k.width + u as usize)
}

fn depth_range(depth: &DepthMap) -> Option<(f64, f64)> {
    depth.valid_values().fold(None, |acc, z| match acc {
        None => Some((z, z)),
        Some((lo, hi)) => Some((lo.min(z), hi.max(z))),
    })
}
