//! TSDF volume integration and marching-cubes surface extraction.

mod marching_cubes;
mod tables;
mod tsdf;

use thiserror::Error;

use crate::geometry::PoseSE3;
use crate::tracking::PseudoRGBDFrame;

pub use marching_cubes::{extract_mesh, TriangleMesh};
pub use tsdf::{GridConfig, OccupancyStats, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("{frames} frames but {poses} poses")]
    LengthMismatch { frames: usize, poses: usize },
    #[error("no surface found in the volume")]
    NoSurface,
    #[error("frame {frame} has no valid depth to bound the volume")]
    NoValidDepth { frame: usize },
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug)]
pub struct FusionResult {
    pub mesh: TriangleMesh,
    pub grid: VoxelGrid,
    pub stats: OccupancyStats,
}

/// Integrates the frames in order, then extracts the surface.
pub fn fuse_sequence(
    frames: &[PseudoRGBDFrame],
    poses: &[PoseSE3],
    config: &GridConfig,
) -> Result<FusionResult, FusionError> {
    if frames.len() != poses.len() {
        return Err(FusionError::LengthMismatch {
            frames: frames.len(),
            poses: poses.len(),
        });
    }
    let Some(first) = frames.first() else {
        return Err(FusionError::NoSurface);
    };
    let mut grid = VoxelGrid::from_frustum(first, &poses[0], config)?;
    for (frame, pose) in frames.iter().zip(poses) {
        grid.integrate(frame, pose);
    }
    let stats = grid.occupancy();
    log::info!(
        "volume {:?} at {:.4} m: {} observed, {} in band",
        stats.dims,
        stats.voxel_size,
        stats.observed_voxels,
        stats.band_voxels
    );
    let mesh = extract_mesh(&grid)?;
    Ok(FusionResult { mesh, grid, stats })
}
