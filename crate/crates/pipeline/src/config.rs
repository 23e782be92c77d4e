use std::path::Path;

use endofuse_core::depth_scaling::DEFAULT_BASELINE_BOUNDS;
use endofuse_core::fusion::GridConfig;
use endofuse_core::metrics::ReportConfig;
use endofuse_core::refine::RefineParams;
use endofuse_core::tracking::{TrackingParams, WemaMode, WemaParams};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    #[default]
    Track,
    /// Ground-truth poses from the manifest, re-based on the first frame.
    GroundTruth,
}

/// Component removals for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Skip the flow-based refinement; the initial depths pass through.
    pub disable_flow: bool,
    /// Replace the baseline fit with `depth = 1/(k·d)`.
    pub fixed_scale: Option<f64>,
    pub disable_ema: bool,
    /// Blend factor fixed at 1.
    pub disable_dyema: bool,
}

impl Ablation {
    pub fn wema_mode(&self) -> WemaMode {
        if self.disable_ema {
            WemaMode::Disabled
        } else if self.disable_dyema {
            WemaMode::FixedBlend
        } else {
            WemaMode::Dynamic
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthInitConfig {
    pub baseline_bounds: (f64, f64),
}

impl Default for DepthInitConfig {
    fn default() -> Self {
        Self {
            baseline_bounds: DEFAULT_BASELINE_BOUNDS,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub grid: GridConfig,
    /// Also write the TSDF volume as raw floats with a JSON header.
    pub dump_grid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub depth_init: DepthInitConfig,
    pub refine: RefineParams,
    pub tracking: TrackingParams,
    pub wema: WemaParams,
    pub fusion: FusionConfig,
    pub eval: ReportConfig,
    pub ablation: Ablation,
    pub pose_source: PoseSource,
    /// Stride of the flow correspondences used for depth consistency.
    pub consistency_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            depth_init: DepthInitConfig::default(),
            refine: RefineParams::default(),
            tracking: TrackingParams::default(),
            wema: WemaParams::default(),
            fusion: FusionConfig::default(),
            eval: ReportConfig::default(),
            ablation: Ablation::default(),
            pose_source: PoseSource::default(),
            consistency_stride: 4,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::BadInput(format!("{}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::BadInput(format!("{}: {e}", path.display())))?;
        cfg.validate()
            .map_err(|e| PipelineError::BadInput(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let (lo, hi) = self.depth_init.baseline_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(format!("depth_init.baseline_bounds [{lo}, {hi}]"));
        }
        if !(self.refine.sigma_d > 0.0 && self.refine.sigma_r_fraction > 0.0) {
            return Err("refine.sigma_d and refine.sigma_r_fraction must be positive".into());
        }
        self.tracking.validate().map_err(|e| format!("tracking: {e}"))?;
        self.wema.validate().map_err(|e| format!("wema: {e}"))?;
        self.fusion.grid.validate().map_err(|e| format!("fusion: {e}"))?;
        if !(self.eval.max_dt > 0.0) || self.eval.rpe_delta == 0 {
            return Err("eval.max_dt must be positive and eval.rpe_delta at least 1".into());
        }
        if let Some(k) = self.ablation.fixed_scale {
            if !(k > 0.0 && k.is_finite()) {
                return Err(format!("ablation.fixed_scale {k} must be positive"));
            }
        }
        if self.consistency_stride == 0 {
            return Err("consistency_stride must be at least 1".into());
        }
        Ok(())
    }
}
