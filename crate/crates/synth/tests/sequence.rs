mod common;

use std::fs;
use std::path::Path;

use common::{bumpy, camera, path, plane};
use endofuse_core::geometry::{PoseSE3, Vector2};
use endofuse_core::refine::warp_depth;
use endofuse_io::manifest::validate_manifest;
use endofuse_io::{flo, image, pfm, tum};
use endofuse_synth::{
    render_frames, render_sequence, CameraPathSpec, Motion, PerturbModel, RenderOptions, SceneSpec, Surface, SynthError,
};

fn arc() -> Motion {
    Motion::Arc { step_deg: 0.8 }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images", "depth", "gt_depth", "flow", "disparity"] {
        let d = dir.join(sub);
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries {
            let p = e.unwrap().path();
            if p.is_file() {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn static_path_has_zero_flow_and_identical_images() {
    let seq = render_frames(&bumpy(), &path(4, Motion::Static)).unwrap();
    for f in &seq.flows {
        assert!(f.mask().iter().filter(|m| **m).count() > 0);
        assert!(f.u().iter().chain(f.v()).all(|v| v.abs() < 1e-9));
    }
    for f in &seq.frames[1..] {
        assert_eq!(f.gray, seq.frames[0].gray);
        assert_eq!(f.depth, seq.frames[0].depth);
    }
}

#[test]
fn z_dolly_flow_is_radially_symmetric() {
    let motion = Motion::Dolly {
        direction: [0.0, 0.0, 1.0],
        step: 0.01,
    };
    let seq = render_frames(&plane(0.5), &path(2, motion)).unwrap();
    let f = &seq.flows[0];
    let k = camera();
    // Probes at (cx ± a, cy ± b).
    let (a, b) = (20.5, 12.5);
    let probe = |sx: f64, sy: f64| {
        let (x, y) = ((k.cx + sx * a) as usize, (k.cy + sy * b) as usize);
        f.get(x, y).unwrap()
    };
    let base = probe(1.0, 1.0);
    assert!(base.0 > 0.1 && base.1 > 0.05, "outward flow expected, got {base:?}");
    for (sx, sy) in [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        let (u, v) = probe(sx, sy);
        assert!(
            (u - sx * base.0).abs() < 1e-6,
            "u at ({sx},{sy}): {u} vs {}",
            sx * base.0
        );
        assert!(
            (v - sy * base.1).abs() < 1e-6,
            "v at ({sx},{sy}): {v} vs {}",
            sy * base.1
        );
    }
    // Pixel offset r in the nearer view came from r·(z − step)/z.
    let expect_u = a * (1.0 - 0.49 / 0.5);
    assert!((base.0 - expect_u).abs() < 1e-9, "{} vs {expect_u}", base.0);
}

#[test]
fn sphere_depth_at_principal_point() {
    let scene = SceneSpec::new(Surface::Sphere {
        center: [0.0, 0.0, 1.1],
        radius: 0.35,
    });
    let d = scene
        .depth_at(&camera(), &PoseSE3::identity(), &Vector2::new(47.5, 35.5))
        .unwrap();
    assert!((d - 0.75).abs() < 1e-9);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let opts = RenderOptions {
        seed: 7,
        depth_noise: Some(PerturbModel::RelativeGaussian { fraction: 0.01 }),
        ..Default::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    render_sequence(&bumpy(), &path(4, arc()), a.path(), &opts).unwrap();
    render_sequence(&bumpy(), &path(4, arc()), b.path(), &opts).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);

    let c = tempfile::tempdir().unwrap();
    render_sequence(&bumpy(), &path(4, arc()), c.path(), &RenderOptions { seed: 8, ..opts }).unwrap();
    assert_ne!(files(c.path()), fa);
}

#[test]
fn written_dataset_validates() {
    let dir = tempfile::tempdir().unwrap();
    render_sequence(&bumpy(), &path(5, arc()), dir.path(), &RenderOptions::default()).unwrap();
    let m = validate_manifest(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.frames.len(), 5);
    assert!(m.frames[0].flow.is_none() && m.frames[4].flow.is_some());

    let disp = tempfile::tempdir().unwrap();
    let opts = RenderOptions {
        disparity_baseline: Some(0.005),
        ..Default::default()
    };
    render_sequence(&bumpy(), &path(3, arc()), disp.path(), &opts).unwrap();
    let m = validate_manifest(&disp.path().join("manifest.json")).unwrap();
    assert_eq!(m.f_pred, Some(camera().fx));
    assert!(m.frames[0].depth.is_some() && m.frames[1].depth.is_none());
    assert!(m.frames.iter().all(|f| f.disparity.is_some()));
}

#[test]
fn files_are_mutually_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = path(4, arc());
    let m = render_sequence(&bumpy(), &spec, dir.path(), &RenderOptions::default()).unwrap();
    let k = camera();
    let gt = tum::read(&m.resolve(m.ground_truth.as_ref().unwrap())).unwrap();
    let truth = spec.poses().unwrap();
    for (a, b) in gt.poses().iter().zip(&truth) {
        assert!((a.translation() - b.translation()).norm() < 1e-8);
        assert!((a.inverse() * *b).rotation().angle() < 1e-8);
    }

    for i in 1..m.frames.len() {
        let prev = image::read_image(&m.resolve(&m.frames[i - 1].image)).unwrap().gray;
        let cur = image::read_image(&m.resolve(&m.frames[i].image)).unwrap().gray;
        let flow = flo::read(&m.resolve(m.frames[i].flow.as_ref().unwrap())).unwrap();
        let (mut err, mut n) = (0.0, 0usize);
        for y in 0..k.height {
            for x in 0..k.width {
                let Some((u, v)) = flow.get(x, y) else { continue };
                if let Some(p) = prev.sample(&Vector2::new(x as f64 - u, y as f64 - v)) {
                    err += (p - cur.get(x, y)).abs();
                    n += 1;
                }
            }
        }
        assert!(n > k.width * k.height / 2, "frame {i}: only {n} flow pixels");
        let mean = err / n as f64;
        assert!(mean < 0.01, "frame {i}: mean abs intensity error {mean}");

        // The previous depth carried along the flow and moved into the
        // current camera lands on the current depth.
        let d_prev = pfm::read_map(&m.resolve(m.frames[i - 1].gt_depth.as_ref().unwrap())).unwrap();
        let d_cur: endofuse_core::geometry::DepthMap =
            pfm::read_map(&m.resolve(m.frames[i].gt_depth.as_ref().unwrap())).unwrap();
        let warped = warp_depth(&d_prev, &flow).unwrap();
        let rel = truth[i].inverse() * truth[i - 1];
        let mut dev = Vec::new();
        for y in 0..k.height {
            for x in 0..k.width {
                let (Some(zw), Some(zc), Some((u, v))) = (warped.get(x, y), d_cur.get(x, y), flow.get(x, y)) else {
                    continue;
                };
                let src = Vector2::new(x as f64 - u, y as f64 - v);
                let p = rel.transform_point(&k.backproject(src, zw).unwrap());
                dev.push((p.z - zc).abs());
            }
        }
        dev.sort_by(f64::total_cmp);
        let median = dev[dev.len() / 2];
        assert!(median < 1e-3, "frame {i}: median depth deviation {median}");
    }
}

#[test]
fn camera_looking_away_is_a_frustum_violation() {
    let spec = CameraPathSpec {
        target: [0.0, 0.0, -1.0],
        ..path(2, Motion::Static)
    };
    match render_frames(&plane(0.5), &spec) {
        Err(SynthError::FrustumViolation { frame: 0, coverage }) => assert_eq!(coverage, 0.0),
        other => panic!("expected a frustum violation, got {other:?}"),
    }
    let fast = path(
        2,
        Motion::Dolly {
            direction: [1.0, 0.0, 0.0],
            step: 0.05,
        },
    );
    assert!(matches!(
        render_frames(&plane(0.5), &fast),
        Err(SynthError::PathTooFast { frame: 1, .. })
    ));
}
