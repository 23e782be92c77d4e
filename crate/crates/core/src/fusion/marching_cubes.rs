use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::tables::{CORNERS, EDGE_CORNERS, EDGE_MASK, TRIANGLES};
use super::{FusionError, VoxelGrid};

/// Indexed triangle mesh in world coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub colors: Vec<[u8; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Undirected edges not shared by exactly two triangles.
    pub fn non_manifold_edges(&self) -> usize {
        let mut count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        count.values().filter(|c| **c != 2).count()
    }

    pub fn is_closed_manifold(&self) -> bool {
        !self.triangles.is_empty() && self.non_manifold_edges() == 0
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

const MIN_AREA: f64 = 1e-12;
/// Edge fraction within which a vertex is welded to the nearer corner.
const SNAP: f64 = 1e-3;

/// Vertex identity shared between neighboring cells: the grid edge it lies
/// on, or the voxel it coincides with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum VertexKey {
    Edge(usize, u8),
    Corner(usize),
}

struct Vertex {
    key: VertexKey,
    position: Vector3<f64>,
    color: [f32; 3],
}

/// Zero isosurface of the TSDF. Cells with any unobserved corner are
/// skipped. Triangles wind counter-clockwise seen from the positive
/// (outside) side.
pub fn extract_mesh(grid: &VoxelGrid) -> Result<TriangleMesh, FusionError> {
    let [nx, ny, nz] = grid.dims();
    let tsdf = grid.tsdf();
    let weight = grid.weights();
    let colors = grid.colors();

    let slabs: Vec<Vec<[Vertex; 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let idx = CORNERS.map(|c| grid.index(i + c[0], j + c[1], k + c[2]));
                    if idx.iter().any(|v| weight[*v] <= 0.0) {
                        continue;
                    }
                    let vals = idx.map(|v| tsdf[v]);
                    let case = vals
                        .iter()
                        .enumerate()
                        .fold(0usize, |acc, (b, v)| acc | (((*v <= 0.0) as usize) << b));
                    if EDGE_MASK[case] == 0 {
                        continue;
                    }
                    let tri = &TRIANGLES[case];
                    for t in tri.chunks(3).take_while(|t| t[0] >= 0) {
                        // Reversed so the winding faces the outside.
                        let verts = [t[0], t[2], t[1]].map(|e| edge_vertex(grid, &idx, &vals, colors, e as usize));
                        out.push(verts);
                    }
                }
            }
            out
        })
        .collect();

    let mut mesh = TriangleMesh::default();
    let mut lookup: HashMap<VertexKey, u32> = HashMap::new();
    for tri in slabs.into_iter().flatten() {
        let ids = tri.map(|v| {
            *lookup.entry(v.key).or_insert_with(|| {
                mesh.vertices.push(v.position);
                mesh.colors.push(v.color.map(|c| c.round().clamp(0.0, 255.0) as u8));
                (mesh.vertices.len() - 1) as u32
            })
        });
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] || mesh.triangle_area(&ids) < MIN_AREA {
            continue;
        }
        mesh.triangles.push(ids);
    }
    if mesh.triangles.is_empty() {
        return Err(FusionError::NoSurface);
    }
    // Drop vertices referenced only by discarded triangles.
    let mut used = vec![u32::MAX; mesh.vertices.len()];
    let mut compact = TriangleMesh::default();
    for t in &mut mesh.triangles {
        for v in t.iter_mut() {
            if used[*v as usize] == u32::MAX {
                used[*v as usize] = compact.vertices.len() as u32;
                compact.vertices.push(mesh.vertices[*v as usize]);
                compact.colors.push(mesh.colors[*v as usize]);
            }
            *v = used[*v as usize];
        }
    }
    compact.triangles = mesh.triangles;
    Ok(compact)
}

fn edge_vertex(grid: &VoxelGrid, idx: &[usize; 8], vals: &[f64; 8], colors: &[[f32; 3]], edge: usize) -> Vertex {
    let [a, b] = EDGE_CORNERS[edge];
    // Interpolate from the lower-index corner so shared edges agree bitwise.
    let (lo, hi) = if idx[a] < idx[b] { (a, b) } else { (b, a) };
    let (v0, v1) = (vals[lo], vals[hi]);
    let t = v0 / (v0 - v1);
    let axis = (0..3)
        .find(|&d| CORNERS[lo][d] != CORNERS[hi][d])
        .expect("edge spans one axis") as u8;
    // Near a corner the vertex is welded to it; the slivers around a
    // near-zero voxel then collapse instead of leaving holes when dropped.
    let t = if t <= SNAP {
        0.0
    } else if t >= 1.0 - SNAP {
        1.0
    } else {
        t
    };
    let key = if t == 0.0 {
        VertexKey::Corner(idx[lo])
    } else if t == 1.0 {
        VertexKey::Corner(idx[hi])
    } else {
        VertexKey::Edge(idx[lo], axis)
    };
    let p0 = voxel_position(grid, idx[lo]);
    let p1 = voxel_position(grid, idx[hi]);
    let (c0, c1) = (colors[idx[lo]], colors[idx[hi]]);
    Vertex {
        key,
        position: p0 + (p1 - p0) * t,
        color: [0, 1, 2].map(|c| c0[c] + (c1[c] - c0[c]) * t as f32),
    }
}

fn voxel_position(grid: &VoxelGrid, idx: usize) -> Vector3<f64> {
    let [nx, ny, _] = grid.dims();
    grid.position(idx % nx, (idx / nx) % ny, idx / (nx * ny))
}
