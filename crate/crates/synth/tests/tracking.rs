mod common;

use common::{bumpy_unlit, tracker_frame, tracking_camera};
use endofuse_core::geometry::{PoseSE3, RotationSO3, Twist, Vector2, Vector3};
use endofuse_core::metrics::{path_length, report, ReportConfig, Trajectory};
use endofuse_core::tracking::{
    align_pair, build_pyramid, optimize_rotation_so3, optimize_se3, photometric_residuals, residual_jacobian,
    track_sequence, FramePyramid, KeyframeSchedule, Parameterization, PseudoRGBDFrame, PyramidLevel, TrackingParams,
};
use endofuse_synth::{render_frames, CameraPathSpec, Motion, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> TrackingParams {
    TrackingParams {
        pyramid_levels: 4,
        ..Default::default()
    }
}

fn render(scene: &SceneSpec, pose: &PoseSE3) -> PseudoRGBDFrame {
    let k = tracking_camera();
    tracker_frame(0, &scene.render(&k, pose), k)
}

fn pyramid(f: &PseudoRGBDFrame) -> FramePyramid {
    build_pyramid(f, params().pyramid_levels, 0.5).unwrap()
}

fn random_twist(rng: &mut ChaCha8Rng, rot_deg: f64, trans: f64) -> Twist {
    let mut unit = || {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    };
    Twist::new(unit() * rot_deg.to_radians(), unit() * trans)
}

fn rotation_error_deg(a: &PoseSE3, b: &PoseSE3) -> f64 {
    (a.inverse() * *b).rotation().angle().to_degrees()
}

/// Start camera above the heightfield, looking down +z at 0.5 m.
fn start() -> PoseSE3 {
    PoseSE3::identity()
}

/// Column-normalized deviation between the analytic Jacobian and central
/// differences, over rows whose projection stays inside one bilinear cell.
fn jacobian_deviation(reference: &PyramidLevel, track: &PyramidLevel, pose: &PoseSE3) -> (f64, usize) {
    const H: f64 = 1e-5;
    let (r, j) = residual_jacobian(reference, track, pose, Parameterization::Se3).unwrap();
    let base = photometric_residuals(reference, track, pose).unwrap();
    assert_eq!(base.values.len(), r.len());
    assert!(base.values.iter().zip(r.iter()).all(|(a, b)| a == b));
    let k_t = track.intrinsics;
    let w = k_t.width;
    let cell = |p: &PoseSE3, pixel: usize| {
        let z = track.depth.at(pixel).unwrap();
        let x = k_t
            .backproject(Vector2::new((pixel % w) as f64, (pixel / w) as f64), z)
            .unwrap();
        let q = reference.intrinsics.project(&p.transform_point(&x)).unwrap();
        (q.x.floor(), q.y.floor())
    };
    let mut fd = vec![vec![f64::NAN; r.len()]; 6];
    let mut keep = vec![true; r.len()];
    for c in 0..6 {
        let mut e = [0.0; 6];
        e[c] = H;
        let step = |s: f64| Twist::new(Vector3::new(e[0], e[1], e[2]) * s, Vector3::new(e[3], e[4], e[5]) * s);
        let (plus, minus) = (pose.retract(&step(1.0)), pose.retract(&step(-1.0)));
        let rp = photometric_residuals(reference, track, &plus).unwrap();
        let rm = photometric_residuals(reference, track, &minus).unwrap();
        let lookup = |res: &endofuse_core::tracking::Residuals| {
            let mut m = std::collections::HashMap::new();
            for (v, p) in res.values.iter().zip(&res.pixels) {
                m.insert(*p, *v);
            }
            m
        };
        let (mp, mm) = (lookup(&rp), lookup(&rm));
        for (row, px) in base.pixels.iter().enumerate() {
            match (mp.get(px), mm.get(px)) {
                (Some(a), Some(b)) if cell(&plus, *px) == cell(&minus, *px) && cell(&plus, *px) == cell(pose, *px) => {
                    fd[c][row] = (a - b) / (2.0 * H);
                }
                _ => keep[row] = false,
            }
        }
    }
    let mut worst: f64 = 0.0;
    for c in 0..6 {
        let scale = (0..r.len())
            .filter(|i| keep[*i])
            .map(|i| j[(i, c)].abs())
            .fold(0.0, f64::max);
        for i in (0..r.len()).filter(|i| keep[*i]) {
            worst = worst.max((fd[c][i] - j[(i, c)]).abs() / scale);
        }
    }
    (worst, keep.iter().filter(|k| **k).count())
}

#[test]
fn jacobian_matches_central_differences() {
    let scene = bumpy_unlit();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for pair in 0..10 {
        let a = start().retract(&random_twist(&mut rng, 2.0, 0.01));
        let b = a.retract(&random_twist(&mut rng, 1.5, 0.008));
        let (fa, fb) = (render(&scene, &a), render(&scene, &b));
        let (pa, pb) = (build_pyramid(&fa, 1, 0.5).unwrap(), build_pyramid(&fb, 1, 0.5).unwrap());
        // Evaluate away from the true pose as well.
        let pose = (a.inverse() * b).retract(&random_twist(&mut rng, 0.3, 0.002));
        let (dev, rows) = jacobian_deviation(pa.finest(), pb.finest(), &pose);
        assert!(rows > 5000, "pair {pair}: only {rows} rows compared");
        assert!(dev < 1e-4, "pair {pair}: relative deviation {dev:e}");
    }
}

#[test]
fn so3_jacobian_is_the_rotation_block() {
    let scene = bumpy_unlit();
    let b = start().retract(&Twist::new(Vector3::new(0.0, 0.01, 0.0), Vector3::new(0.002, 0.0, 0.0)));
    let (pa, pb) = (pyramid(&render(&scene, &start())), pyramid(&render(&scene, &b)));
    let (ra, j6) = residual_jacobian(pa.finest(), pb.finest(), &b, Parameterization::Se3).unwrap();
    let (rb, j3) = residual_jacobian(pa.finest(), pb.finest(), &b, Parameterization::So3).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(j6.columns(0, 3), j3);
}

#[test]
fn residuals_are_smaller_at_the_true_pose() {
    let scene = bumpy_unlit();
    let b = start().retract(&Twist::new(
        Vector3::new(0.01, -0.02, 0.005),
        Vector3::new(0.004, -0.002, 0.003),
    ));
    let (pa, pb) = (pyramid(&render(&scene, &start())), pyramid(&render(&scene, &b)));
    let at_truth = photometric_residuals(pa.finest(), pb.finest(), &b).unwrap().rms();
    let at_identity = photometric_residuals(pa.finest(), pb.finest(), &PoseSE3::identity())
        .unwrap()
        .rms();
    assert!(at_truth < at_identity, "{at_truth} vs {at_identity}");
}

#[test]
fn recovers_two_degree_rotation_about_y() {
    let scene = bumpy_unlit();
    let truth = PoseSE3::from_rotation(RotationSO3::exp(&Vector3::new(0.0, 2f64.to_radians(), 0.0)));
    let (pa, pb) = (pyramid(&render(&scene, &start())), pyramid(&render(&scene, &truth)));
    let rot = optimize_rotation_so3(&pa, &pb, &params()).unwrap();
    let err = rotation_error_deg(&rot.pose, &truth);
    assert!(err < 0.1, "rotation error {err} deg");
    assert!(rot.pose.translation().norm() == 0.0);
}

#[test]
fn recovers_small_rigid_motion() {
    let scene = bumpy_unlit();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for pair in 0..5 {
        // Up to 2 deg and 2% of the 0.5 m depth.
        let truth = start().retract(&random_twist(&mut rng, 1.15, 0.0057));
        let (pa, pb) = (pyramid(&render(&scene, &start())), pyramid(&render(&scene, &truth)));
        let out = align_pair(&pa, &pb, &params()).unwrap();
        let rot_err = rotation_error_deg(&out.pose, &truth);
        let t_err = (out.pose.translation() - truth.translation()).norm() / truth.translation().norm();
        assert!(rot_err < 0.2, "pair {pair}: rotation error {rot_err} deg");
        assert!(t_err < 0.1, "pair {pair}: relative translation error {t_err}");
    }
}

#[test]
fn true_rotation_start_needs_fewer_iterations() {
    let scene = bumpy_unlit();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut from_truth, mut from_identity) = (0, 0);
    for _ in 0..10 {
        let truth = start().retract(&random_twist(&mut rng, 2.0, 0.004));
        let (pa, pb) = (pyramid(&render(&scene, &start())), pyramid(&render(&scene, &truth)));
        from_truth += optimize_se3(&pa, &pb, truth.rotation(), &params()).unwrap().iterations;
        from_identity += optimize_se3(&pa, &pb, &RotationSO3::identity(), &params())
            .unwrap()
            .iterations;
    }
    assert!(from_truth < from_identity, "{from_truth} vs {from_identity}");
}

fn arc_path(frames: usize, step_deg: f64) -> CameraPathSpec {
    CameraPathSpec {
        frames,
        intrinsics: tracking_camera(),
        eye: [0.0, 0.0, 0.0],
        target: [0.0, 0.0, 0.5],
        motion: Motion::Arc { step_deg },
    }
}

fn track_rendered(spec: &CameraPathSpec, scene: &SceneSpec) -> (Vec<PoseSE3>, Vec<PseudoRGBDFrame>) {
    let seq = render_frames(scene, spec).unwrap();
    let frames: Vec<PseudoRGBDFrame> = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut t = tracker_frame(i, f, seq.intrinsics);
            t.index = i;
            t
        })
        .collect();
    let first_inv = seq.poses[0].inverse();
    (seq.poses.iter().map(|p| first_inv * *p).collect(), frames)
}

#[test]
fn thirty_frame_arc_stays_within_one_percent() {
    let (gt, frames) = track_rendered(&arc_path(30, 1.0), &bumpy_unlit());
    let schedule = KeyframeSchedule::new(2).unwrap();
    let tracked = track_sequence(&frames, schedule, &params()).unwrap();
    let est = Trajectory::from_frame_rate(tracked.poses.clone(), 30.0);
    let truth = Trajectory::from_frame_rate(gt.clone(), 30.0);
    let r = report(&est, &truth, &ReportConfig::default()).unwrap();
    let length_mm = path_length(&gt) * 1000.0;
    assert!(r.rmse < 0.01 * length_mm, "ATE RMSE {} mm over {length_mm} mm", r.rmse);
}

#[test]
fn static_camera_stays_put() {
    let spec = CameraPathSpec {
        motion: Motion::Static,
        ..arc_path(6, 1.0)
    };
    let (_, frames) = track_rendered(&spec, &bumpy_unlit());
    let tracked = track_sequence(&frames, KeyframeSchedule::new(2).unwrap(), &params()).unwrap();
    for p in &tracked.poses {
        assert!(p.translation().norm() < 1e-6);
        assert!(p.rotation().angle() < 1e-6);
    }
}

#[test]
fn time_reversal_inverts_relative_motion() {
    let (_, frames) = track_rendered(&arc_path(8, 1.0), &bumpy_unlit());
    let schedule = KeyframeSchedule::new(1).unwrap();
    let fwd = track_sequence(&frames, schedule, &params()).unwrap().poses;
    let mut rev_frames = frames.clone();
    rev_frames.reverse();
    for (i, f) in rev_frames.iter_mut().enumerate() {
        f.index = i;
    }
    let mut rev = track_sequence(&rev_frames, schedule, &params()).unwrap().poses;
    rev.reverse();
    for i in 0..frames.len() - 1 {
        let a = fwd[i].inverse() * fwd[i + 1];
        let b = rev[i].inverse() * rev[i + 1];
        let dt = (a.translation() - b.translation()).norm();
        let dr = rotation_error_deg(&a, &b);
        assert!(dt < 5e-3 && dr < 0.1, "step {i}: {dt} m, {dr} deg");
    }
}
