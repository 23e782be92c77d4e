//! Binary little-endian PLY: float xyz + uchar RGB per vertex, uchar-counted
//! int index lists per face.

use std::path::Path;

use endofuse_core::fusion::TriangleMesh;
use endofuse_core::geometry::Vector3;

use crate::{read_bytes, write_bytes, IoError};

pub fn write(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    let mut bytes = header.into_bytes();
    bytes.reserve(mesh.vertices.len() * 15 + mesh.triangles.len() * 13);
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.iter() {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        bytes.extend_from_slice(&mesh.colors.get(i).copied().unwrap_or([200, 200, 200]));
    }
    for t in &mesh.triangles {
        bytes.push(3);
        for i in t {
            bytes.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    write_bytes(path, &bytes)
}

/// Reads files in exactly the layout [`write`] produces.
pub fn read(path: &Path) -> Result<TriangleMesh, IoError> {
    let bytes = read_bytes(path)?;
    let bad = |m: &str| IoError::format(path, m.to_string());
    let end = b"end_header\n";
    let split = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("no end_header"))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("non-UTF-8 header"))?;
    if !header.starts_with("ply\nformat binary_little_endian 1.0\n") {
        return Err(bad("not a binary little-endian PLY"));
    }
    let count = |name: &str| -> Result<usize, IoError> {
        header
            .lines()
            .find_map(|l| l.strip_prefix(&format!("element {name} ")))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(&format!("missing element {name}")))
    };
    let (nv, nf) = (count("vertex")?, count("face")?);
    let body = &bytes[split..];
    if body.len() != nv * 15 + nf * 13 {
        return Err(bad("body length does not match the header"));
    }
    let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes")) as f64;
    let mut mesh = TriangleMesh::default();
    for i in 0..nv {
        let o = i * 15;
        mesh.vertices
            .push(Vector3::new(f32_at(o), f32_at(o + 4), f32_at(o + 8)));
        mesh.colors.push([body[o + 12], body[o + 13], body[o + 14]]);
    }
    for i in 0..nf {
        let o = nv * 15 + i * 13;
        if body[o] != 3 {
            return Err(bad("only triangles are supported"));
        }
        let idx = |k: usize| i32::from_le_bytes(body[o + 1 + 4 * k..o + 5 + 4 * k].try_into().expect("4 bytes"));
        let t = [idx(0), idx(1), idx(2)];
        if t.iter().any(|v| *v < 0 || *v as usize >= nv) {
            return Err(bad(&format!("face {i} references a missing vertex")));
        }
        mesh.triangles.push(t.map(|v| v as u32));
    }
    Ok(mesh)
}
