mod common;

use std::time::Instant;

use common::tracker_frame;
use endofuse_core::fusion::{fuse_sequence, GridConfig, TriangleMesh};
use endofuse_core::geometry::{CameraIntrinsics, PoseSE3, Twist, Vector3};
use endofuse_core::tracking::PseudoRGBDFrame;
use endofuse_synth::{look_at, SceneSpec, Surface};

const RADIUS: f64 = 0.5;
const VOXEL: f64 = 0.01;

/// Roughly uniform directions on the unit sphere.
fn fibonacci(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let a = golden * i as f64;
            Vector3::new(r * a.cos(), y, r * a.sin())
        })
        .collect()
}

fn sphere_views(n: usize) -> (Vec<PseudoRGBDFrame>, Vec<PoseSE3>) {
    let k = CameraIntrinsics::new(160.0, 160.0, 95.5, 95.5, 192, 192).unwrap();
    let scene = SceneSpec::new(Surface::Sphere {
        center: [0.0; 3],
        radius: RADIUS,
    });
    let poses: Vec<PoseSE3> = fibonacci(n)
        .iter()
        .map(|d| look_at(d * 1.4, Vector3::zeros()).unwrap())
        .collect();
    let frames = poses
        .iter()
        .enumerate()
        .map(|(i, p)| tracker_frame(i, &scene.render(&k, p), k))
        .collect();
    (frames, poses)
}

fn config() -> GridConfig {
    GridConfig {
        voxel_size: VOXEL,
        bounds: Some(([-0.6; 3], [0.6; 3])),
        ..Default::default()
    }
}

fn radial_error(mesh: &TriangleMesh) -> f64 {
    mesh.vertices.iter().map(|v| (v.norm() - RADIUS).abs()).sum::<f64>() / mesh.vertices.len() as f64
}

#[test]
fn twenty_views_of_a_sphere_give_a_closed_accurate_mesh() {
    let (frames, poses) = sphere_views(20);
    let start = Instant::now();
    let fused = fuse_sequence(&frames, &poses, &config()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let err = radial_error(&fused.mesh);
    assert!(err < 0.5 * VOXEL, "mean radial error {err}");
    assert!(
        fused.mesh.is_closed_manifold(),
        "{} non-manifold edges",
        fused.mesh.non_manifold_edges()
    );
    assert!(elapsed < 60.0, "{elapsed} s");
}

#[test]
fn perturbed_poses_make_the_mesh_worse() {
    let (frames, poses) = sphere_views(20);
    let clean = radial_error(&fuse_sequence(&frames, &poses, &config()).unwrap().mesh);
    let tilted: Vec<PoseSE3> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let axis = Vector3::new(1.0, (i as f64).sin(), (i as f64).cos()).normalize();
            p.retract(&Twist::new(axis * 5f64.to_radians(), Vector3::zeros()))
        })
        .collect();
    let noisy = radial_error(&fuse_sequence(&frames, &tilted, &config()).unwrap().mesh);
    assert!(noisy > clean, "{noisy} vs {clean}");
}

#[test]
fn single_view_only_covers_the_visible_cap() {
    let (frames, poses) = sphere_views(20);
    let fused = fuse_sequence(&frames[..1], &poses[..1], &config()).unwrap();
    let eye = poses[0].translation().normalize();
    // Points on the far side of the sphere are never seen.
    assert!(
        fused.mesh.vertices.iter().all(|v| v.dot(&eye) > -0.05),
        "mesh wraps behind the sphere"
    );
    assert!(!fused.mesh.is_closed_manifold());
}
