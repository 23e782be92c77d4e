//! One line per top-level acceptance criterion; exits nonzero if any fails.

// Expected values are the script output verbatim.
#![allow(clippy::excessive_precision)]

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use endofuse::stages::{run_stages, RunDir, Stage, ALL_STAGES};
use endofuse::synth::SynthJob;
use endofuse::{load_manifest, PipelineConfig};
use endofuse_core::depth_scaling::estimate_baseline;
use endofuse_core::fusion::{fuse_sequence, GridConfig};
use endofuse_core::geometry::{
    CameraIntrinsics, DepthMap, DisparityMap, PoseSE3, RotationSO3, Twist, Vector2, Vector3,
};
use endofuse_core::metrics::{
    correspondences_from_flow, depth_consistency_stats, path_length, report, ReportConfig, Trajectory,
};
use endofuse_core::refine::{refine_sequence, similarity_proxy, warp_depth, FlowField, RefineParams};
use endofuse_core::tracking::{
    build_pyramid, dogleg_step, minimize, photometric_residuals, residual_jacobian, track_sequence, KeyframeSchedule,
    LeastSquaresProblem, Linearization, Parameterization, PseudoRGBDFrame, PyramidLevel, Residuals, SolverParams,
    StepKind, TrackingParams, GN_DAMPING,
};
use endofuse_synth::{input_depth, look_at, render_frames, Motion, PerturbModel, SceneSpec, Surface};
use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_oracle() -> Outcome {
    const F: f64 = 500.0;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (64, 48);
        let b = rng.random_range(0.002..0.02);
        let disp: Vec<f64> = (0..w * h).map(|_| rng.random_range(5.0..80.0)).collect();
        let depth: Vec<f64> = disp
            .iter()
            .map(|d| F * b / d * (1.0 + rng.random_range(-0.05..0.05)))
            .collect();
        // Closed-form minimizer of Σ (D − F·B/d)²: B = Σ a·D / Σ a², a = F/d.
        let (num, den) = disp
            .iter()
            .zip(&depth)
            .fold((0.0, 0.0), |(n, m), (d, z)| (n + F / d * z, m + (F / d).powi(2)));
        let oracle = num / den;
        let est = estimate_baseline(
            &DepthMap::from_values(w, h, depth).unwrap(),
            &DisparityMap::from_values(w, h, disp).unwrap(),
            F,
            (1e-6, 10.0),
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        worst = worst.max((est.baseline - oracle).abs() / oracle);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 1.0,
        format!("max relative error {worst:.2e} over 10 seeds in {secs:.3} s"),
    )
}

struct Rosenbrock;

impl LeastSquaresProblem for Rosenbrock {
    type State = [f64; 2];
    type Error = ();

    fn linearize(&self, s: &[f64; 2]) -> Result<Linearization, ()> {
        let (x, y) = (s[0], s[1]);
        let r = DVector::from_vec(vec![10.0 * (y - x * x), 1.0 - x]);
        let j = DMatrix::from_row_slice(2, 2, &[-20.0 * x, 10.0, -1.0, 0.0]);
        Ok(Linearization {
            cost: 0.5 * r.norm_squared(),
            gradient: j.transpose() * &r,
            hessian: j.transpose() * &j,
        })
    }

    fn cost(&self, s: &[f64; 2]) -> Option<f64> {
        Some(0.5 * ((10.0 * (s[1] - s[0] * s[0])).powi(2) + (1.0 - s[0]).powi(2)))
    }

    fn retract(&self, s: &[f64; 2], step: &DVector<f64>) -> [f64; 2] {
        [s[0] + step[0], s[1] + step[1]]
    }
}

fn dogleg_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut gn, mut interpolated, mut worst_boundary): (usize, usize, f64) = (0, 0, 0.0);
    for _ in 0..2000 {
        let m = rng.random_range(4..10);
        let n = rng.random_range(2..6);
        let j = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
        let r = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let rho = rng.random_range(0.01..2.0);
        let (step, kind) = dogleg_step(&j, &r, rho);
        match kind {
            StepKind::GaussNewton => {
                let h = j.transpose() * &j;
                let damped = &h + DMatrix::identity(n, n) * (GN_DAMPING * h.trace() / n as f64);
                let expected = damped.cholesky().unwrap().solve(&-(j.transpose() * &r));
                if step != expected {
                    return Err(format!("Gauss-Newton step differs: {step} vs {expected}"));
                }
                gn += 1;
            }
            StepKind::Interpolated => {
                worst_boundary = worst_boundary.max((step.norm() - rho).abs());
                interpolated += 1;
            }
            _ => {}
        }
    }
    let out = minimize(
        &Rosenbrock,
        [-1.2, 1.0],
        &SolverParams {
            max_iterations: 500,
            ..Default::default()
        },
    )
    .map_err(|e| format!("Rosenbrock: {e:?}"))?;
    let dist = (out.state[0] - 1.0).abs().max((out.state[1] - 1.0).abs());
    check(
        gn > 50 && interpolated > 50 && worst_boundary <= 1e-12 && dist < 1e-6 && out.iterations <= 500,
        format!(
            "{gn} GN steps bit-equal, {interpolated} interpolated with max |‖Δ‖ − ρ| {worst_boundary:.1e}; \
             Rosenbrock at distance {dist:.1e} after {} iterations",
            out.iterations
        ),
    )
}

fn unlit_bumpy() -> SceneSpec {
    SynthJob::default().scene
}

fn tracking_camera() -> CameraIntrinsics {
    SynthJob::default().path.intrinsics
}

fn frame(scene: &SceneSpec, k: CameraIntrinsics, pose: &PoseSE3, index: usize) -> PseudoRGBDFrame {
    let r = scene.render(&k, pose);
    PseudoRGBDFrame::new(index, r.gray, r.depth, k).unwrap()
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

/// Largest column-normalized gap between the analytic Jacobian and central
/// differences, over rows whose projection stays in one bilinear cell.
fn jacobian_deviation(reference: &PyramidLevel, track: &PyramidLevel, pose: &PoseSE3) -> (f64, usize) {
    const H: f64 = 1e-5;
    let (r, j) = residual_jacobian(reference, track, pose, Parameterization::Se3).unwrap();
    let base = photometric_residuals(reference, track, pose).unwrap();
    let k = track.intrinsics;
    let cell = |p: &PoseSE3, pixel: usize| {
        let z = track.depth.at(pixel).unwrap();
        let x = k
            .backproject(Vector2::new((pixel % k.width) as f64, (pixel / k.width) as f64), z)
            .unwrap();
        let q = reference.intrinsics.project(&p.transform_point(&x)).unwrap();
        (q.x.floor(), q.y.floor())
    };
    let by_pixel = |res: &Residuals| {
        res.pixels
            .iter()
            .copied()
            .zip(res.values.iter().copied())
            .collect::<HashMap<_, _>>()
    };
    let mut keep = vec![true; r.len()];
    let mut fd = vec![vec![0.0; r.len()]; 6];
    for c in 0..6 {
        let mut e = [0.0; 6];
        e[c] = H;
        let step = |s: f64| Twist::new(Vector3::new(e[0], e[1], e[2]) * s, Vector3::new(e[3], e[4], e[5]) * s);
        let (plus, minus) = (pose.retract(&step(1.0)), pose.retract(&step(-1.0)));
        let rp = by_pixel(&photometric_residuals(reference, track, &plus).unwrap());
        let rm = by_pixel(&photometric_residuals(reference, track, &minus).unwrap());
        for (row, px) in base.pixels.iter().enumerate() {
            match (rp.get(px), rm.get(px)) {
                (Some(a), Some(b)) if cell(&plus, *px) == cell(pose, *px) && cell(&minus, *px) == cell(pose, *px) => {
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

fn jacobian_check() -> Outcome {
    let scene = unlit_bumpy();
    let k = tracking_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut worst, mut fewest): (f64, usize) = (0.0, usize::MAX);
    for _ in 0..10 {
        let a = PoseSE3::identity().retract(&random_twist(&mut rng, 2.0, 0.01));
        let b = a.retract(&random_twist(&mut rng, 1.5, 0.008));
        let pa = build_pyramid(&frame(&scene, k, &a, 0), 1, 0.5).unwrap();
        let pb = build_pyramid(&frame(&scene, k, &b, 1), 1, 0.5).unwrap();
        let pose = (a.inverse() * b).retract(&random_twist(&mut rng, 0.3, 0.002));
        let (dev, rows) = jacobian_deviation(pa.finest(), pb.finest(), &pose);
        worst = worst.max(dev);
        fewest = fewest.min(rows);
    }
    check(
        worst < 1e-4 && fewest > 1000,
        format!("max relative deviation {worst:.2e} on 10 pairs (at least {fewest} rows each)"),
    )
}

fn tracked(job: &SynthJob) -> (Vec<PoseSE3>, Vec<PoseSE3>) {
    let seq = render_frames(&job.scene, &job.path).unwrap();
    let frames: Vec<PseudoRGBDFrame> = seq
        .frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| PseudoRGBDFrame::new(i, f.gray, f.depth, seq.intrinsics).unwrap())
        .collect();
    let est = track_sequence(&frames, KeyframeSchedule::new(2).unwrap(), &TrackingParams::default())
        .unwrap()
        .poses;
    let first_inv = seq.poses[0].inverse();
    (est, seq.poses.iter().map(|p| first_inv * *p).collect())
}

fn pose_recovery() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let job = SynthJob::default();
        let (est, gt) = tracked(&job);
        let step = gt[0].inverse() * gt[1];
        let r = report(
            &Trajectory::from_frame_rate(est, 30.0),
            &Trajectory::from_frame_rate(gt.clone(), 30.0),
            &ReportConfig::default(),
        )
        .unwrap();
        let length_mm = path_length(&gt) * 1000.0;
        let mut still = SynthJob::default();
        still.path.frames = 8;
        still.path.motion = Motion::Static;
        let worst_static = tracked(&still)
            .0
            .iter()
            .map(|p| p.translation().norm())
            .fold(0.0, f64::max);
        let secs = start.elapsed().as_secs_f64();
        check(
            r.rmse < 0.01 * length_mm && worst_static < 1e-6 && secs < 60.0,
            format!(
                "arc of 30 frames at {:.2} deg and {:.1} mm per frame: ATE RMSE {:.3} mm over {length_mm:.1} mm; \
                 static max |t| {worst_static:.1e} m; {secs:.1} s on one thread",
                step.rotation().angle().to_degrees(),
                step.translation().norm() * 1000.0,
                r.rmse
            ),
        )
    })
}

/// Mean |D_i − D_{i−1} carried along the flow| over pixels valid in both.
fn inter_frame_difference(depths: &[DepthMap], flows: &[FlowField]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 1..depths.len() {
        let warped = warp_depth(&depths[i - 1], &flows[i - 1]).unwrap();
        for p in 0..warped.len() {
            if let (Some(a), Some(b)) = (warped.at(p), depths[i].at(p)) {
                sum += (a - b).abs();
                n += 1;
            }
        }
    }
    sum / n as f64
}

fn temporal_refinement() -> Outcome {
    let job = SynthJob::default();
    let seq = render_frames(&job.scene, &job.path).unwrap();
    let mut options = job.options.clone();
    options.depth_noise = Some(PerturbModel::RelativeGaussian { fraction: 0.02 });
    options.seed = 9;
    let noisy: Vec<DepthMap> = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| input_depth(&f.depth, &options, i))
        .collect();
    let scores: Vec<_> = seq
        .frames
        .windows(2)
        .map(|w| similarity_proxy(&w[0].gray, &w[1].gray).unwrap())
        .collect();
    let refined = refine_sequence(&noisy, &seq.flows, &scores, &RefineParams::default()).unwrap();
    let corr: Vec<_> = seq.flows.iter().map(|f| correspondences_from_flow(f, 2)).collect();
    let gap = |d: &[DepthMap]| {
        depth_consistency_stats(d, &seq.intrinsics, &seq.poses, &corr)
            .unwrap()
            .mean
    };
    let (diff_raw, diff_ref) = (
        inter_frame_difference(&noisy, &seq.flows),
        inter_frame_difference(&refined, &seq.flows),
    );
    let (gap_raw, gap_ref) = (gap(&noisy), gap(&refined));
    check(
        diff_ref < diff_raw && gap_ref < gap_raw,
        format!(
            "inter-frame difference {:.3} -> {:.3} mm; GT-correspondence displacement {:.3} -> {:.3} mm",
            diff_raw * 1e3,
            diff_ref * 1e3,
            gap_raw * 1e3,
            gap_ref * 1e3
        ),
    )
}

fn tsdf_sphere() -> Outcome {
    const RADIUS: f64 = 0.5;
    const VOXEL: f64 = 0.01;
    let k = CameraIntrinsics::new(160.0, 160.0, 95.5, 95.5, 192, 192).unwrap();
    let scene = SceneSpec::new(Surface::Sphere {
        center: [0.0; 3],
        radius: RADIUS,
    });
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let poses: Vec<PoseSE3> = (0..20)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / 20.0;
            let (r, a) = ((1.0 - y * y).sqrt(), golden * i as f64);
            look_at(Vector3::new(r * a.cos(), y, r * a.sin()) * 1.4, Vector3::zeros()).unwrap()
        })
        .collect();
    let frames: Vec<PseudoRGBDFrame> = poses.iter().enumerate().map(|(i, p)| frame(&scene, k, p, i)).collect();
    let config = GridConfig {
        voxel_size: VOXEL,
        bounds: Some(([-0.6; 3], [0.6; 3])),
        ..Default::default()
    };
    let start = Instant::now();
    let mesh = fuse_sequence(&frames, &poses, &config).map_err(|e| e.to_string())?.mesh;
    let secs = start.elapsed().as_secs_f64();
    let err = mesh.vertices.iter().map(|v| (v.norm() - RADIUS).abs()).sum::<f64>() / mesh.vertices.len() as f64;
    let bad_edges = mesh.non_manifold_edges();
    check(
        err < 0.5 * VOXEL && bad_edges == 0 && secs < 60.0,
        format!(
            "mean radial error {:.3} mm (limit {:.1}), {bad_edges} non-manifold edges, {} triangles, {secs:.1} s",
            err * 1e3,
            0.5 * VOXEL * 1e3,
            mesh.triangles.len()
        ),
    )
}

fn tlr(manifest: &std::path::Path, out: &std::path::Path, cfg: &PipelineConfig) -> f64 {
    let m = load_manifest(manifest).unwrap();
    let run = RunDir::new(out);
    run_stages(
        &m,
        cfg,
        &run,
        &[Stage::DepthInit, Stage::Refine, Stage::Track, Stage::Eval],
    )
    .unwrap();
    let text = fs::read_to_string(run.metrics_csv()).unwrap();
    endofuse_core::metrics::PoseErrorReport::from_csv_row(text.lines().nth(1).unwrap())
        .unwrap()
        .1
        .tlr
}

fn scale_ablation() -> Outcome {
    let dir = tempdir().unwrap();
    let mut job = SynthJob::default();
    job.options.disparity_baseline = Some(0.005);
    job.options.depth_noise = Some(PerturbModel::RelativeGaussian { fraction: 0.02 });
    job.options.seed = 4;
    job.run(&dir.path().join("data")).unwrap();
    let manifest = dir.path().join("data/manifest.json");
    let with = |f: &dyn Fn(&mut PipelineConfig)| {
        let mut cfg = PipelineConfig::default();
        f(&mut cfg);
        cfg
    };
    let full = tlr(&manifest, &dir.path().join("full"), &PipelineConfig::default());
    let no_flow = tlr(
        &manifest,
        &dir.path().join("no_flow"),
        &with(&|c| c.ablation.disable_flow = true),
    );
    let k30 = tlr(
        &manifest,
        &dir.path().join("k30"),
        &with(&|c| c.ablation.fixed_scale = Some(30.0)),
    );
    let k100 = tlr(
        &manifest,
        &dir.path().join("k100"),
        &with(&|c| c.ablation.fixed_scale = Some(100.0)),
    );
    let ratio = k30 / k100;
    let target = 100.0 / 30.0;
    check(
        (ratio / target - 1.0).abs() < 0.05 && k30 < full && no_flow != full,
        format!(
            "TLR full {full:.4}, no flow {no_flow:.4}, k=30 {k30:.5}, k=100 {k100:.5}; ratio {ratio:.4} vs {target:.4}"
        ),
    )
}

type Raw = ([f64; 3], [f64; 4]);

fn raw_trajectory(raw: &[Raw]) -> Trajectory {
    let poses = raw
        .iter()
        .map(|(t, [x, y, z, w])| {
            let q = UnitQuaternion::from_quaternion(Quaternion::new(*w, *x, *y, *z));
            PoseSE3::new(
                RotationSO3::from_matrix(*q.to_rotation_matrix().matrix()).unwrap(),
                Vector3::from(*t),
            )
        })
        .collect();
    Trajectory::from_frame_rate(poses, 30.0)
}

fn metrics_oracle() -> Outcome {
    // Hand-built poses and the values an independent script computes for them.
    const GT: [Raw; 5] = [
        ([0.000, 0.000, 0.000], [0.0, 0.0, 0.0, 1.0]),
        ([0.010, 0.001, 0.000], [0.01, 0.02, 0.0, 1.0]),
        ([0.021, 0.003, 0.002], [0.02, 0.03, 0.01, 1.0]),
        ([0.030, 0.006, 0.005], [0.03, 0.05, 0.01, 1.0]),
        ([0.041, 0.010, 0.007], [0.05, 0.06, 0.02, 1.0]),
    ];
    const EST: [Raw; 5] = [
        ([0.000, 0.000, 0.000], [0.0, 0.0, 0.0, 1.0]),
        ([0.011, 0.000, 0.001], [0.012, 0.018, 0.001, 1.0]),
        ([0.022, 0.004, 0.001], [0.018, 0.035, 0.012, 1.0]),
        ([0.028, 0.008, 0.006], [0.034, 0.049, 0.006, 1.0]),
        ([0.044, 0.009, 0.010], [0.047, 0.066, 0.025, 1.0]),
    ];
    let cfg = ReportConfig::default();
    let r = report(&raw_trajectory(&EST), &raw_trajectory(&GT), &cfg).map_err(|e| e.to_string())?;
    let expected = [
        (r.t_avg, 2.16460011173568478e+00),
        (r.t_std, 1.45413422911155443e+00),
        (r.r_avg, 5.22602150216896044e-01),
        (r.r_std, 3.24995261383321576e-01),
        (r.rmse, 2.60768096208105860e+00),
        (r.t_fin, 4.35889894354067131e+00),
        (r.r_fin, 9.54672868541821984e-01),
        (r.rpe_avg, 3.61440341283394773e+00),
        (r.rpe_std, 1.59620297390364874e+00),
        (r.t_max, 4.35889894354067131e+00),
        (r.r_max, 9.54672868541821984e-01),
        (r.pct_t_below_avg, 60.0),
        (r.pct_r_below_avg, 40.0),
        (r.tlr, 1.11139522457499385e+00),
        (r.axis_mean[0], 1.39999999999999813e+00),
        (r.axis_mean[1], 1.00000000000000022e+00),
        (r.axis_mean[2], 1.19999999999999996e+00),
    ];
    let worst = expected
        .iter()
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max);
    let same = report(&raw_trajectory(&GT), &raw_trajectory(&GT), &cfg).map_err(|e| e.to_string())?;
    let zero = [
        same.t_avg,
        same.t_std,
        same.r_avg,
        same.r_std,
        same.rmse,
        same.t_fin,
        same.r_fin,
        same.rpe_avg,
        same.rpe_std,
        same.t_max,
        same.r_max,
    ]
    .iter()
    .chain(same.axis_mean.iter())
    .all(|v| *v == 0.0);
    check(
        worst < 1e-9 && zero && format!("{:.3}", same.tlr) == "1.000",
        format!(
            "{} fields within {worst:.1e} of the script; est = gt gives zeros: {zero}, TLR {:.3}",
            expected.len(),
            same.tlr
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempdir().unwrap();
    common::synth(&common::small_job(8), &dir.path().join("data"));
    let m = load_manifest(&dir.path().join("data/manifest.json")).unwrap();
    let runs: Vec<RunDir> = ["a", "b"].iter().map(|n| RunDir::new(dir.path().join(n))).collect();
    for run in &runs {
        run_stages(&m, &PipelineConfig::default(), run, &ALL_STAGES).map_err(|e| e.to_string())?;
    }
    let same = |f: fn(&RunDir) -> std::path::PathBuf| fs::read(f(&runs[0])).unwrap() == fs::read(f(&runs[1])).unwrap();
    let (traj, mesh) = (same(RunDir::trajectory), same(RunDir::mesh));
    check(
        traj && mesh,
        format!("trajectory identical: {traj}, mesh identical: {mesh}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("baseline oracle", baseline_oracle),
        ("dog-leg step law", dogleg_law),
        ("photometric Jacobian", jacobian_check),
        ("pose recovery", pose_recovery),
        ("temporal refinement", temporal_refinement),
        ("TSDF sphere", tsdf_sphere),
        ("scale and ablation TLR", scale_ablation),
        ("metrics oracle", metrics_oracle),
        ("run-all determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
