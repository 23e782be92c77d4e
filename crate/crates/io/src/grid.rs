//! Raw TSDF volume dump: float32 little-endian values, x fastest, NaN for
//! unobserved voxels, with a JSON header alongside.

use std::path::Path;

use endofuse_core::fusion::VoxelGrid;
use serde::{Deserialize, Serialize};

use crate::{read_bytes, write_bytes, IoError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub mu: f64,
    pub dtype: String,
    pub order: String,
    pub data: String,
}

/// Writes `<raw_path>` and its header at `<raw_path>.json`.
pub fn write(raw_path: &Path, grid: &VoxelGrid) -> Result<(), IoError> {
    let mut bytes = Vec::with_capacity(grid.tsdf().len() * 4);
    for (t, w) in grid.tsdf().iter().zip(grid.weights()) {
        let v = if *w > 0.0 { *t as f32 } else { f32::NAN };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(raw_path, &bytes)?;
    let o = grid.origin();
    let header = GridHeader {
        dims: grid.dims(),
        origin: [o.x, o.y, o.z],
        voxel_size: grid.voxel_size(),
        mu: grid.mu(),
        dtype: "float32-le".into(),
        order: "x-fastest".into(),
        data: raw_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let json = serde_json::to_string_pretty(&header).expect("serializable header");
    write_bytes(&header_path(raw_path), json.as_bytes())
}

pub fn header_path(raw_path: &Path) -> std::path::PathBuf {
    let mut p = raw_path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

pub fn read(raw_path: &Path) -> Result<(GridHeader, Vec<f32>), IoError> {
    let hp = header_path(raw_path);
    let header: GridHeader =
        serde_json::from_slice(&read_bytes(&hp)?).map_err(|e| IoError::format(&hp, e.to_string()))?;
    let bytes = read_bytes(raw_path)?;
    let n: usize = header.dims.iter().product();
    if bytes.len() != n * 4 {
        return Err(IoError::format(
            raw_path,
            format!("{} bytes, expected {}", bytes.len(), n * 4),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, values))
}
