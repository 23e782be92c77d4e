//! Stage orchestration for the depth, tracking, fusion and evaluation
//! pipeline. Every stage reads its inputs from disk and writes its outputs
//! under a run directory, so stages can be re-run independently.

pub mod config;
pub mod stages;
pub mod synth;

use std::path::Path;

use endofuse_io::manifest::DatasetManifest;
use endofuse_io::IoError;
use thiserror::Error;

pub use config::{Ablation, PipelineConfig, PoseSource, CONFIG_SCHEMA_VERSION};
pub use endofuse_io::manifest::{validate_manifest, ManifestIssue};
pub use stages::RunDir;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("tracking lost: {0}")]
    TrackingLost(String),
    #[error("no surface: {0}")]
    NoSurface(String),
    #[error("{0}")]
    Failed(String),
}

impl PipelineError {
    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::BadInput(_) => 2,
            Self::TrackingLost(_) => 3,
            Self::NoSurface(_) => 4,
            Self::Failed(_) => 1,
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Format { .. } => Self::BadInput(e.to_string()),
            IoError::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Self::BadInput(e.to_string())
            }
            IoError::Io { .. } => Self::Failed(e.to_string()),
        }
    }
}

/// Validated manifest, or every problem found in it.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, PipelineError> {
    validate_manifest(path).map_err(|issues| {
        let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
        PipelineError::BadInput(format!("{} is invalid:\n{}", path.display(), lines.join("\n")))
    })
}
