//! Dataset manifest (`manifest.json`) and its validator.
//!
//! Paths are relative to the manifest's directory. Per frame: a PNG image,
//! metric depth and/or disparity (PFM), optional ground-truth depth (PFM),
//! optional incoming flow from the previous frame (`.flo`, never on frame 0)
//! and optional validity mask (PNG).

use std::fmt;
use std::path::{Path, PathBuf};

use endofuse_core::geometry::CameraIntrinsics;
use serde::{Deserialize, Serialize};

use crate::{flo, image, pfm, read_bytes, scores, tum, write_bytes, IoError};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FPS: f64 = 30.0;

fn default_fps() -> f64 {
    DEFAULT_FPS
}

fn default_units() -> String {
    "meters".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disparity: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

impl FrameEntry {
    pub fn new(image: impl Into<PathBuf>) -> Self {
        Self {
            image: image.into(),
            depth: None,
            disparity: None,
            gt_depth: None,
            flow: None,
            mask: None,
            timestamp: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_units")]
    pub units: String,
    /// Focal length in pixels paired with the disparity maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_pred: Option<f64>,
    /// Similarity-score CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<PathBuf>,
    /// Ground-truth TUM trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Free-form provenance (generator settings, seeds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    pub frames: Vec<FrameEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(intrinsics: CameraIntrinsics, frames: Vec<FrameEntry>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            intrinsics,
            fps: DEFAULT_FPS,
            units: default_units(),
            f_pred: None,
            similarity: None,
            ground_truth: None,
            generator: None,
            frames,
            root: PathBuf::new(),
        }
    }

    /// Parses without touching the referenced files.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = read_bytes(path)?;
        let mut m: Self = serde_json::from_slice(&bytes).map_err(|e| IoError::format(path, e.to_string()))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut json = serde_json::to_string_pretty(self).expect("serializable manifest");
        json.push('\n');
        write_bytes(path, json.as_bytes())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_root(&mut self, root: impl Into<PathBuf>) {
        self.root = root.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    /// Per-frame timestamps, or `index / fps` when none are given.
    pub fn timestamps(&self) -> Vec<f64> {
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| f.timestamp.unwrap_or(i as f64 / self.fps))
            .collect()
    }

    pub fn has_disparity(&self) -> bool {
        self.frames.iter().any(|f| f.disparity.is_some())
    }
}

/// One validation finding.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestIssue {
    pub frame: Option<usize>,
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for ManifestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(i) = self.frame {
            write!(f, "frame {i}: ")?;
        }
        if let Some(p) = &self.path {
            write!(f, "{}: ", p.display())?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Default)]
struct Issues(Vec<ManifestIssue>);

impl Issues {
    fn push(&mut self, frame: Option<usize>, path: Option<&Path>, message: impl Into<String>) {
        self.0.push(ManifestIssue {
            frame,
            path: path.map(Path::to_path_buf),
            message: message.into(),
        });
    }

    fn io(&mut self, frame: Option<usize>, e: IoError) {
        let path = e.path().to_path_buf();
        let message = match e {
            IoError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "file does not exist".into(),
            IoError::Io { source, .. } => source.to_string(),
            IoError::Format { message, .. } => message,
        };
        self.push(frame, Some(&path), message);
    }
}

/// Checks everything the manifest references: existence, format magics,
/// dimensions against the intrinsics, timestamps and field consistency.
/// Every problem is reported, not just the first.
pub fn validate_manifest(path: &Path) -> Result<DatasetManifest, Vec<ManifestIssue>> {
    let mut issues = Issues::default();
    let m = match DatasetManifest::load(path) {
        Ok(m) => m,
        Err(e) => {
            issues.io(None, e);
            return Err(issues.0);
        }
    };
    let here = Some(path);
    if m.schema_version != SCHEMA_VERSION {
        issues.push(
            None,
            here,
            format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                m.schema_version
            ),
        );
    }
    if let Err(e) = m.intrinsics.validate() {
        issues.push(None, here, format!("intrinsics: {e}"));
    }
    if !(m.fps > 0.0 && m.fps.is_finite()) {
        issues.push(None, here, format!("fps {} must be positive", m.fps));
    }
    if m.units != "meters" {
        issues.push(
            None,
            here,
            format!("units {:?} unsupported (expected \"meters\")", m.units),
        );
    }
    if m.frames.is_empty() {
        issues.push(None, here, "frame list is empty");
    }
    if m.has_disparity() {
        match m.f_pred {
            None => issues.push(None, here, "disparity maps are listed but f_pred is missing"),
            Some(f) if !(f > 0.0 && f.is_finite()) => issues.push(None, here, format!("f_pred {f} must be positive")),
            _ => {}
        }
    }
    let (w, h) = (m.intrinsics.width, m.intrinsics.height);
    let check_dims = |issues: &mut Issues, i: usize, p: &Path, kind: &str, dims: (usize, usize)| {
        if dims != (w, h) {
            issues.push(
                Some(i),
                Some(p),
                format!("{kind} is {}x{} but the intrinsics say {w}x{h}", dims.0, dims.1),
            );
        }
    };
    let with_stamps = m.frames.iter().filter(|f| f.timestamp.is_some()).count();
    if with_stamps != 0 && with_stamps != m.frames.len() {
        issues.push(None, here, "timestamps must be given for every frame or for none");
    }
    let mut last_stamp: Option<f64> = None;
    for (i, f) in m.frames.iter().enumerate() {
        let img = m.resolve(&f.image);
        match image::probe(&img) {
            Ok(dims) => check_dims(&mut issues, i, &img, "image", dims),
            Err(e) => issues.io(Some(i), e),
        }
        if f.depth.is_none() && f.disparity.is_none() {
            issues.push(Some(i), None, "needs a depth or a disparity map");
        }
        for (kind, p) in [
            ("depth", &f.depth),
            ("disparity", &f.disparity),
            ("gt_depth", &f.gt_depth),
        ] {
            if let Some(p) = p {
                let p = m.resolve(p);
                match pfm::probe(&p) {
                    Ok(dims) => check_dims(&mut issues, i, &p, kind, dims),
                    Err(e) => issues.io(Some(i), e),
                }
            }
        }
        if let Some(p) = &f.flow {
            let p = m.resolve(p);
            if i == 0 {
                issues.push(Some(0), Some(&p), "the first frame has no previous frame to flow from");
            }
            match flo::probe(&p) {
                Ok(dims) => check_dims(&mut issues, i, &p, "flow", dims),
                Err(e) => issues.io(Some(i), e),
            }
        }
        if let Some(p) = &f.mask {
            let p = m.resolve(p);
            match image::probe(&p) {
                Ok(dims) => check_dims(&mut issues, i, &p, "mask", dims),
                Err(e) => issues.io(Some(i), e),
            }
        }
        if let Some(t) = f.timestamp {
            if !t.is_finite() || last_stamp.is_some_and(|l| t <= l) {
                issues.push(Some(i), None, format!("timestamp {t} is not strictly increasing"));
            }
            last_stamp = Some(t);
        }
    }
    if let Some(p) = &m.similarity {
        let p = m.resolve(p);
        match scores::read(&p) {
            Ok(records) => {
                if let Some(r) = records
                    .iter()
                    .find(|r| r.frame_index == 0 || r.frame_index >= m.frames.len())
                {
                    issues.push(
                        None,
                        Some(&p),
                        format!("score for frame {} has no frame pair", r.frame_index),
                    );
                }
            }
            Err(e) => issues.io(None, e),
        }
    }
    if let Some(p) = &m.ground_truth {
        if let Err(e) = tum::read(&m.resolve(p)) {
            issues.io(None, e);
        }
    }
    if issues.0.is_empty() {
        Ok(m)
    } else {
        Err(issues.0)
    }
}
