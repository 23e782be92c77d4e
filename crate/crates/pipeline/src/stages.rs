use std::path::{Path, PathBuf};

use endofuse_core::depth_scaling::{apply_fixed_scale, depth_from_disparity, estimate_baseline, BaselineEstimate};
use endofuse_core::fusion::{fuse_sequence, FusionError, OccupancyStats};
use endofuse_core::geometry::{DepthMap, DisparityMap, PoseSE3};
use endofuse_core::metrics::{
    correspondences_from_flow, depth_consistency_stats, report, DisplacementStats, PoseErrorReport, Trajectory,
};
use endofuse_core::refine::{refine_sequence, similarity_proxy, FlowField, SimilarityScore};
use endofuse_core::tracking::{regularize_sequence, track_sequence, KeyframeSchedule, PseudoRGBDFrame, TrackError};
use endofuse_io::image::LoadedImage;
use endofuse_io::manifest::DatasetManifest;
use endofuse_io::{flo, grid, image, pfm, ply, scores, tum};
use log::{info, warn};
use serde::Serialize;

use crate::{PipelineConfig, PipelineError, PoseSource};

/// Output layout of one pipeline run.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

fn frame_file(i: usize, ext: &str) -> String {
    format!("{i:06}.{ext}")
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn initial_depth(&self, i: usize) -> PathBuf {
        self.root.join("depth_init").join(frame_file(i, "pfm"))
    }

    pub fn depth_init_summary(&self) -> PathBuf {
        self.root.join("depth_init").join("summary.json")
    }

    pub fn refined_depth(&self, i: usize) -> PathBuf {
        self.root.join("refined").join(frame_file(i, "pfm"))
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.txt")
    }

    /// Before pose smoothing.
    pub fn raw_trajectory(&self) -> PathBuf {
        self.root.join("trajectory_raw.txt")
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.ply")
    }

    pub fn fusion_summary(&self) -> PathBuf {
        self.root.join("fusion.json")
    }

    pub fn tsdf(&self) -> PathBuf {
        self.root.join("tsdf.raw")
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn metrics_text(&self) -> PathBuf {
        self.root.join("metrics.txt")
    }

    pub fn consistency_csv(&self) -> PathBuf {
        self.root.join("depth_consistency.csv")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Failed(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::Failed(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Failed(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn load_images(m: &DatasetManifest) -> Result<Vec<LoadedImage>, PipelineError> {
    m.frames
        .iter()
        .map(|f| image::read_image(&m.resolve(&f.image)).map_err(PipelineError::from))
        .collect()
}

fn read_depths(n: usize, path: impl Fn(usize) -> PathBuf) -> Result<Vec<DepthMap>, PipelineError> {
    (0..n)
        .map(|i| {
            let p = path(i);
            pfm::read_map(&p)
                .map_err(|e| PipelineError::BadInput(format!("frame {i}: {e} (run the earlier stage first)")))
        })
        .collect()
}

fn apply_mask(depth: DepthMap, mask: &[bool]) -> DepthMap {
    let valid: Vec<bool> = depth.mask().iter().zip(mask).map(|(a, b)| *a && *b).collect();
    let values: Vec<f64> = depth
        .values()
        .iter()
        .zip(&valid)
        .map(|(v, ok)| if *ok { *v } else { 0.0 })
        .collect();
    DepthMap::with_mask(depth.width(), depth.height(), values, valid).expect("masked values stay valid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthInitSummary {
    /// `baseline`, `fixed_scale` or `metric_depth`.
    pub mode: String,
    pub baseline: Option<f64>,
    pub fit_residual: Option<f64>,
    pub fit_at_bound: Option<bool>,
    pub fixed_scale: Option<f64>,
    pub frames: usize,
}

/// Metric depth for every frame: from disparities through the fitted
/// baseline (or the fixed-scale ablation), or the supplied depths as is.
pub fn depth_init(m: &DatasetManifest, cfg: &PipelineConfig, run: &RunDir) -> Result<DepthInitSummary, PipelineError> {
    let n = m.frames.len();
    let fixed = cfg.ablation.fixed_scale;
    let mut summary = DepthInitSummary {
        mode: String::new(),
        baseline: None,
        fit_residual: None,
        fit_at_bound: None,
        fixed_scale: fixed,
        frames: n,
    };
    let depths: Vec<DepthMap> = if m.has_disparity() {
        let f_pred = m
            .f_pred
            .ok_or_else(|| PipelineError::BadInput("manifest has disparities but no f_pred".into()))?;
        let disparities: Vec<DisparityMap> =
            m.frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let p = f.disparity.as_ref().ok_or_else(|| {
                        PipelineError::BadInput(format!("frame {i}: no disparity (all frames need one)"))
                    })?;
                    pfm::read_map(&m.resolve(p)).map_err(PipelineError::from)
                })
                .collect::<Result<_, _>>()?;
        match fixed {
            Some(k) => {
                summary.mode = "fixed_scale".into();
                disparities.iter().map(|d| apply_fixed_scale(d, k)).collect()
            }
            None => {
                let p = m.frames[0].depth.as_ref().ok_or_else(|| {
                    PipelineError::BadInput("frame 0: metric depth is needed to fit the baseline".into())
                })?;
                let d0: DepthMap = pfm::read_map(&m.resolve(p))?;
                let BaselineEstimate {
                    baseline,
                    residual,
                    at_bound,
                    ..
                } = estimate_baseline(&d0, &disparities[0], f_pred, cfg.depth_init.baseline_bounds)
                    .map_err(|e| PipelineError::BadInput(format!("frame 0: {e}")))?;
                if at_bound {
                    warn!(
                        "baseline {baseline} m sits at the bound {:?}",
                        cfg.depth_init.baseline_bounds
                    );
                }
                info!("pseudo-stereo baseline {baseline:.6e} m");
                summary.mode = "baseline".into();
                summary.baseline = Some(baseline);
                summary.fit_residual = Some(residual);
                summary.fit_at_bound = Some(at_bound);
                disparities
                    .iter()
                    .map(|d| depth_from_disparity(d, f_pred, baseline))
                    .collect()
            }
        }
    } else {
        if fixed.is_some() {
            return Err(PipelineError::BadInput(
                "ablation.fixed_scale needs disparity inputs, but the manifest only has depth".into(),
            ));
        }
        summary.mode = "metric_depth".into();
        m.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let p = f
                    .depth
                    .as_ref()
                    .ok_or_else(|| PipelineError::BadInput(format!("frame {i}: no depth")))?;
                pfm::read_map(&m.resolve(p)).map_err(PipelineError::from)
            })
            .collect::<Result<_, _>>()?
    };
    for (i, (d, f)) in depths.into_iter().zip(&m.frames).enumerate() {
        let d = match &f.mask {
            Some(p) => apply_mask(d, &image::read_mask(&m.resolve(p))?.2),
            None => d,
        };
        if d.valid_count() == 0 {
            warn!("frame {i}: no valid depth");
        }
        pfm::write_map(&run.initial_depth(i), &d)?;
    }
    write_json(&run.depth_init_summary(), &summary)?;
    Ok(summary)
}

fn load_flows(m: &DatasetManifest) -> Result<Vec<Option<FlowField>>, PipelineError> {
    m.frames
        .iter()
        .map(|f| {
            f.flow
                .as_ref()
                .map(|p| flo::read(&m.resolve(p)))
                .transpose()
                .map_err(PipelineError::from)
        })
        .collect()
}

/// Scores for frames `1..n`, from the manifest or the image proxy.
fn load_scores(m: &DatasetManifest, images: &[LoadedImage]) -> Result<Vec<SimilarityScore>, PipelineError> {
    let n = m.frames.len();
    let mut out: Vec<Option<SimilarityScore>> = vec![None; n];
    if let Some(p) = &m.similarity {
        for r in scores::read(&m.resolve(p))? {
            if r.frame_index < n {
                out[r.frame_index] = Some(r.score);
            }
        }
    }
    (1..n)
        .map(|i| match out[i] {
            Some(s) => Ok(s),
            None => similarity_proxy(&images[i - 1].gray, &images[i].gray)
                .map_err(|e| PipelineError::BadInput(format!("frame {i}: {e}"))),
        })
        .collect()
}

/// Temporal refinement along the flow chain; with `disable_flow` the initial
/// depths pass through unchanged.
pub fn refine(m: &DatasetManifest, cfg: &PipelineConfig, run: &RunDir) -> Result<Vec<DepthMap>, PipelineError> {
    let n = m.frames.len();
    let initial = read_depths(n, |i| run.initial_depth(i))?;
    let refined = if cfg.ablation.disable_flow || n < 2 {
        initial
    } else {
        let flows: Vec<FlowField> = load_flows(m)?
            .into_iter()
            .enumerate()
            .skip(1)
            .map(|(i, f)| {
                f.ok_or_else(|| {
                    PipelineError::BadInput(format!("frame {i}: no flow (set ablation.disable_flow to run without)"))
                })
            })
            .collect::<Result<_, _>>()?;
        let images = load_images(m)?;
        let scores = load_scores(m, &images)?;
        refine_sequence(&initial, &flows, &scores, &cfg.refine).map_err(|e| PipelineError::BadInput(e.to_string()))?
    };
    for (i, d) in refined.iter().enumerate() {
        pfm::write_map(&run.refined_depth(i), d)?;
    }
    Ok(refined)
}

/// Ground-truth camera-to-world poses per frame, re-based so frame 0 is the
/// origin. `None` when the manifest has no ground truth.
pub fn ground_truth_poses(m: &DatasetManifest, max_dt: f64) -> Result<Option<Vec<PoseSE3>>, PipelineError> {
    let Some(p) = &m.ground_truth else { return Ok(None) };
    let path = m.resolve(p);
    let gt = tum::read(&path)?;
    let poses = m
        .timestamps()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let stamps = gt.stamps();
            let j = stamps.partition_point(|s| s < t);
            let best = [j.checked_sub(1), (j < stamps.len()).then_some(j)]
                .into_iter()
                .flatten()
                .min_by(|a, b| (stamps[*a] - t).abs().total_cmp(&(stamps[*b] - t).abs()));
            match best {
                Some(k) if (stamps[k] - t).abs() <= max_dt => Ok(gt.poses()[k]),
                _ => Err(PipelineError::BadInput(format!(
                    "frame {i}: {} has no pose within {max_dt} s of t = {t}",
                    path.display()
                ))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let first_inv = poses[0].inverse();
    Ok(Some(poses.iter().map(|p| first_inv * *p).collect()))
}

fn tracker_frames(
    m: &DatasetManifest,
    images: Vec<LoadedImage>,
    depths: Vec<DepthMap>,
) -> Result<Vec<PseudoRGBDFrame>, PipelineError> {
    images
        .into_iter()
        .zip(depths)
        .enumerate()
        .map(|(i, (img, d))| {
            let mut f = PseudoRGBDFrame::new(i, img.gray, d, m.intrinsics)
                .map_err(|e| PipelineError::BadInput(format!("frame {i}: {e}")))?;
            f.color = img.color;
            Ok(f)
        })
        .collect()
}

/// World poses from direct alignment (or ground truth), then smoothing.
pub fn track(m: &DatasetManifest, cfg: &PipelineConfig, run: &RunDir) -> Result<Vec<PoseSE3>, PipelineError> {
    let n = m.frames.len();
    let stamps = m.timestamps();
    let raw = match cfg.pose_source {
        PoseSource::GroundTruth => ground_truth_poses(m, cfg.eval.max_dt)?
            .ok_or_else(|| PipelineError::BadInput("pose_source is ground_truth but the manifest has none".into()))?,
        PoseSource::Track => {
            let depths = read_depths(n, |i| run.refined_depth(i))?;
            let frames = tracker_frames(m, load_images(m)?, depths)?;
            let schedule = KeyframeSchedule::new(cfg.tracking.keyframe_alpha)
                .ok_or_else(|| PipelineError::BadInput("tracking.keyframe_alpha must be at least 1".into()))?;
            match track_sequence(&frames, schedule, &cfg.tracking) {
                Ok(t) => t.poses,
                Err(TrackError::Lost {
                    frame,
                    reference,
                    partial,
                    source,
                }) => {
                    let done = Trajectory::new(stamps[..partial.len()].to_vec(), partial)
                        .map_err(|e| PipelineError::Failed(e.to_string()))?;
                    tum::write(&run.raw_trajectory(), &done)?;
                    return Err(PipelineError::TrackingLost(format!(
                        "frame {frame} against keyframe {reference}: {source}"
                    )));
                }
                Err(e) => return Err(PipelineError::BadInput(e.to_string())),
            }
        }
    };
    let smoothed = regularize_sequence(&raw, &cfg.wema, cfg.ablation.wema_mode());
    let traj = |poses: Vec<PoseSE3>| {
        Trajectory::new(stamps.clone(), poses).map_err(|e| PipelineError::BadInput(e.to_string()))
    };
    tum::write(&run.raw_trajectory(), &traj(raw)?)?;
    tum::write(&run.trajectory(), &traj(smoothed.clone())?)?;
    Ok(smoothed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FusionSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub closed_manifold: bool,
    pub occupancy: OccupancySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancySummary {
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub total_voxels: usize,
    pub observed_voxels: usize,
    pub band_voxels: usize,
}

impl From<&OccupancyStats> for OccupancySummary {
    fn from(s: &OccupancyStats) -> Self {
        Self {
            dims: s.dims,
            voxel_size: s.voxel_size,
            total_voxels: s.total_voxels,
            observed_voxels: s.observed_voxels,
            band_voxels: s.band_voxels,
        }
    }
}

/// TSDF fusion of the refined depths along the trajectory, then a mesh.
pub fn fuse(m: &DatasetManifest, cfg: &PipelineConfig, run: &RunDir) -> Result<FusionSummary, PipelineError> {
    let n = m.frames.len();
    let traj = tum::read(&run.trajectory())?;
    if traj.len() != n {
        return Err(PipelineError::BadInput(format!(
            "{} has {} poses for {n} frames",
            run.trajectory().display(),
            traj.len()
        )));
    }
    let depths = read_depths(n, |i| run.refined_depth(i))?;
    let frames = tracker_frames(m, load_images(m)?, depths)?;
    let fused = fuse_sequence(&frames, traj.poses(), &cfg.fusion.grid).map_err(|e| match e {
        FusionError::NoSurface => {
            PipelineError::NoSurface(format!("no zero crossing in the fused volume of {n} frames"))
        }
        FusionError::NoValidDepth { frame } => PipelineError::BadInput(format!("frame {frame}: no valid depth")),
        other => PipelineError::BadInput(other.to_string()),
    })?;
    ply::write(&run.mesh(), &fused.mesh)?;
    if cfg.fusion.dump_grid {
        grid::write(&run.tsdf(), &fused.grid)?;
    }
    let summary = FusionSummary {
        vertices: fused.mesh.vertices.len(),
        triangles: fused.mesh.triangles.len(),
        closed_manifold: fused.mesh.is_closed_manifold(),
        occupancy: (&fused.stats).into(),
    };
    write_json(&run.fusion_summary(), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub report: PoseErrorReport,
    /// Refined depths, then the initial ones, when flows are available.
    pub consistency: Option<(DisplacementStats, DisplacementStats)>,
}

fn sequence_label(m: &DatasetManifest) -> String {
    m.root()
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "sequence".into())
}

/// Pose errors against ground truth and, with flows, the depth consistency
/// of the refined and initial depths.
pub fn eval(m: &DatasetManifest, cfg: &PipelineConfig, run: &RunDir) -> Result<EvalOutcome, PipelineError> {
    let n = m.frames.len();
    let est = tum::read(&run.trajectory())?;
    let gt_poses = ground_truth_poses(m, cfg.eval.max_dt)?
        .ok_or_else(|| PipelineError::BadInput("evaluation needs ground_truth in the manifest".into()))?;
    let gt = Trajectory::new(m.timestamps(), gt_poses.clone()).map_err(|e| PipelineError::BadInput(e.to_string()))?;
    let rep = report(&est, &gt, &cfg.eval).map_err(|e| PipelineError::BadInput(format!("evaluation: {e}")))?;
    let label = sequence_label(m);
    let mut text = rep.to_text(&label);

    let flows = load_flows(m)?;
    let consistency = if n >= 2 && flows.iter().skip(1).all(Option::is_some) {
        let corr: Vec<_> = flows
            .iter()
            .skip(1)
            .map(|f| correspondences_from_flow(f.as_ref().expect("checked"), cfg.consistency_stride))
            .collect();
        let refined = read_depths(n, |i| run.refined_depth(i))?;
        let initial = read_depths(n, |i| run.initial_depth(i))?;
        let stats = |d: &[DepthMap]| depth_consistency_stats(d, &m.intrinsics, &gt_poses, &corr);
        match (stats(&refined), stats(&initial)) {
            (Ok(r), Ok(i)) => {
                text.push_str(&format!(
                    "\ndepth consistency (m): refined mean {:.6e} median {:.6e}; initial mean {:.6e} median {:.6e}\n",
                    r.mean, r.median, i.mean, i.median
                ));
                write_text(&run.consistency_csv(), &r.bar_plot_csv())?;
                Some((r, i))
            }
            (Err(e), _) | (_, Err(e)) => {
                warn!("depth consistency skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    write_text(
        &run.metrics_csv(),
        &format!("{}\n{}\n", PoseErrorReport::csv_header(), rep.to_csv_row(&label)),
    )?;
    write_text(&run.metrics_text(), &text)?;
    Ok(EvalOutcome {
        report: rep,
        consistency,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    DepthInit,
    Refine,
    Track,
    Fuse,
    Eval,
}

pub const ALL_STAGES: [Stage; 5] = [Stage::DepthInit, Stage::Refine, Stage::Track, Stage::Fuse, Stage::Eval];

/// Runs `stages` in order, recording the effective configuration first.
/// Evaluation is skipped when the manifest has no ground truth.
pub fn run_stages(
    m: &DatasetManifest,
    cfg: &PipelineConfig,
    run: &RunDir,
    stages: &[Stage],
) -> Result<(), PipelineError> {
    cfg.validate().map_err(PipelineError::BadInput)?;
    write_json(&run.config(), cfg)?;
    for stage in stages {
        info!("stage {stage:?}");
        match stage {
            Stage::DepthInit => {
                depth_init(m, cfg, run)?;
            }
            Stage::Refine => {
                refine(m, cfg, run)?;
            }
            Stage::Track => {
                track(m, cfg, run)?;
            }
            Stage::Fuse => {
                fuse(m, cfg, run)?;
            }
            Stage::Eval if m.ground_truth.is_none() && stages.len() > 1 => {
                warn!("no ground truth; skipping evaluation")
            }
            Stage::Eval => {
                eval(m, cfg, run)?;
            }
        }
    }
    Ok(())
}
