use std::path::Path;

use endofuse_core::geometry::{CameraIntrinsics, DepthMap, DisparityMap, PoseSE3, Vector2};
use endofuse_core::metrics::Trajectory;
use endofuse_core::refine::{similarity_proxy, FlowField};
use endofuse_io::manifest::{DatasetManifest, FrameEntry, DEFAULT_FPS};
use endofuse_io::scores::ScoreRecord;
use endofuse_io::{flo, image, pfm, scores, tum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{perturb_depth, CameraPathSpec, PerturbModel, RenderedFrame, SceneSpec, SynthError};

/// Minimum fraction of pixels that must see the surface.
pub const MIN_COVERAGE: f64 = 0.5;
pub const MAX_STEP_ROTATION_DEG: f64 = 5.0;
/// Relative to the mean depth of the earlier frame.
pub const MAX_STEP_TRANSLATION: f64 = 0.05;
/// Relative depth disagreement above which a flow source counts as occluded.
const OCCLUSION_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<PoseSE3>,
    pub frames: Vec<RenderedFrame>,
    /// `flows[i]` lives on frame `i + 1`'s grid: pixel `x` there came from
    /// `x − F(x)` in frame `i`.
    pub flows: Vec<FlowField>,
}

impl SyntheticSequence {
    pub fn depths(&self) -> Vec<DepthMap> {
        self.frames.iter().map(|f| f.depth.clone()).collect()
    }
}

/// Exact flow into the current frame from the previous one. Pixels whose
/// source leaves the image or is hidden in the previous view are invalid.
pub fn ground_truth_flow(
    k: &CameraIntrinsics,
    depth_prev: &DepthMap,
    pose_prev: &PoseSE3,
    depth_cur: &DepthMap,
    pose_cur: &PoseSE3,
) -> FlowField {
    let rel = pose_prev.inverse() * *pose_cur;
    let (w, h) = (k.width, k.height);
    let n = w * h;
    let (mut u, mut v, mut mask) = (vec![0.0; n], vec![0.0; n], vec![false; n]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(z) = depth_cur.get(x, y) else { continue };
            let q = Vector2::new(x as f64, y as f64);
            let Ok(p_cur) = k.backproject(q, z) else { continue };
            let p_prev = rel.transform_point(&p_cur);
            let Some(src) = k.project(&p_prev) else { continue };
            let visible = depth_prev
                .sample(&src)
                .is_some_and(|zp| (zp - p_prev.z).abs() <= OCCLUSION_TOLERANCE * p_prev.z);
            if visible {
                u[i] = q.x - src.x;
                v[i] = q.y - src.y;
                mask[i] = true;
            }
        }
    }
    FlowField::with_mask(w, h, u, v, mask).expect("sized buffers")
}

/// Renders every view (in parallel) and the flows between neighbors, and
/// checks coverage and step sizes.
pub fn render_frames(scene: &SceneSpec, path: &CameraPathSpec) -> Result<SyntheticSequence, SynthError> {
    scene.validate()?;
    let poses = path.poses()?;
    let k = path.intrinsics;
    let frames: Vec<RenderedFrame> = poses.par_iter().map(|p| scene.render(&k, p)).collect();
    for (i, f) in frames.iter().enumerate() {
        if f.coverage() < MIN_COVERAGE {
            return Err(SynthError::FrustumViolation {
                frame: i,
                coverage: f.coverage(),
            });
        }
    }
    for i in 1..poses.len() {
        let rel = poses[i - 1].inverse() * poses[i];
        let rot = rel.rotation().angle().to_degrees();
        let mean_depth = frames[i - 1].depth.valid_values().sum::<f64>() / frames[i - 1].depth.valid_count() as f64;
        let trans = rel.translation().norm() / mean_depth;
        if rot >= MAX_STEP_ROTATION_DEG || trans >= MAX_STEP_TRANSLATION {
            return Err(SynthError::PathTooFast {
                frame: i,
                rotation_deg: rot,
                translation_fraction: trans,
            });
        }
    }
    let flows = (1..poses.len())
        .into_par_iter()
        .map(|i| ground_truth_flow(&k, &frames[i - 1].depth, &poses[i - 1], &frames[i].depth, &poses[i]))
        .collect();
    Ok(SyntheticSequence {
        intrinsics: k,
        poses,
        frames,
        flows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    pub seed: u64,
    /// Applied to the input depth maps (ground truth is written untouched).
    pub depth_noise: Option<PerturbModel>,
    /// When set, inputs are disparities `fx · B / z` with this baseline,
    /// plus metric depth for the first frame only.
    pub disparity_baseline: Option<f64>,
    pub fps: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            depth_noise: None,
            disparity_baseline: None,
            fps: DEFAULT_FPS,
        }
    }
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Noisy input depth for frame `i` under `options`.
pub fn input_depth(gt: &DepthMap, options: &RenderOptions, frame: usize) -> DepthMap {
    match options.depth_noise {
        Some(model) => perturb_depth(gt, model, frame_seed(options.seed, frame)),
        None => gt.clone(),
    }
}

/// Renders the sequence and writes a dataset under `out_dir`:
/// `images/` (16-bit RGB PNG), `depth/` or `disparity/` (PFM), `gt_depth/`
/// (PFM), `flow/` (`.flo`), `scores.csv`, `groundtruth.txt` (TUM) and
/// `manifest.json`. Output bytes depend only on the inputs.
pub fn render_sequence(
    scene: &SceneSpec,
    path: &CameraPathSpec,
    out_dir: &Path,
    options: &RenderOptions,
) -> Result<DatasetManifest, SynthError> {
    if !(options.fps > 0.0) {
        return Err(SynthError::InvalidSpec(format!("fps {}", options.fps)));
    }
    if options.disparity_baseline.is_some_and(|b| !(b > 0.0)) {
        return Err(SynthError::InvalidSpec("disparity baseline must be positive".into()));
    }
    let seq = render_frames(scene, path)?;
    let k = seq.intrinsics;
    let n = seq.frames.len();
    let entries: Vec<FrameEntry> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<FrameEntry, SynthError> {
            let f = &seq.frames[i];
            let name = format!("{i:06}");
            let mut e = FrameEntry::new(format!("images/{name}.png"));
            image::write_rgb16(&out_dir.join(&e.image), k.width, k.height, &f.color)?;
            let gt = format!("gt_depth/{name}.pfm");
            pfm::write_map(&out_dir.join(&gt), &f.depth)?;
            e.gt_depth = Some(gt.into());
            let input = input_depth(&f.depth, options, i);
            if let Some(b) = options.disparity_baseline {
                let disp: DisparityMap = input.map_into(|z| k.fx * b / z);
                let p = format!("disparity/{name}.pfm");
                pfm::write_map(&out_dir.join(&p), &disp)?;
                e.disparity = Some(p.into());
            }
            if options.disparity_baseline.is_none() || i == 0 {
                let p = format!("depth/{name}.pfm");
                pfm::write_map(&out_dir.join(&p), &input)?;
                e.depth = Some(p.into());
            }
            if i > 0 {
                let p = format!("flow/{name}.flo");
                flo::write(&out_dir.join(&p), &seq.flows[i - 1])?;
                e.flow = Some(p.into());
            }
            Ok(e)
        })
        .collect::<Result<_, _>>()?;

    let records: Vec<ScoreRecord> = (1..n)
        .map(|i| ScoreRecord {
            frame_index: i,
            score: similarity_proxy(&seq.frames[i - 1].gray, &seq.frames[i].gray).expect("same size"),
        })
        .collect();
    scores::write(&out_dir.join("scores.csv"), &records)?;
    let traj = Trajectory::from_frame_rate(seq.poses.clone(), options.fps);
    tum::write(&out_dir.join("groundtruth.txt"), &traj)?;

    let mut m = DatasetManifest::new(k, entries);
    m.fps = options.fps;
    m.f_pred = options.disparity_baseline.map(|_| k.fx);
    m.similarity = Some("scores.csv".into());
    m.ground_truth = Some("groundtruth.txt".into());
    m.generator = Some(serde_json::json!({
        "scene": scene,
        "path": path,
        "options": options,
    }));
    m.set_root(out_dir);
    m.save(&out_dir.join("manifest.json"))?;
    Ok(m)
}
